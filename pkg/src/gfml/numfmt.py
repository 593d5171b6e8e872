import math


def format_number(x: float) -> str:
    """Shortest decimal text that parses back to the same float.

    Integral values drop the trailing ``.0`` (``0`` rather than ``0.0``).
    """
    x = float(x)
    if x.is_integer() and abs(x) < 1e16 and not (x == 0 and math.copysign(1.0, x) < 0):
        return str(int(x))
    return repr(x)
