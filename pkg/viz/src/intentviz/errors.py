"""Error type shared by the intentviz modules."""


class VizError(Exception):
    """Invalid input file, unknown kind selection, or an unplottable request.

    The CLI reports the message on stderr and exits with status 1.
    """
