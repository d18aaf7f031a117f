"""Small shared helpers: cumulative trapezoid, run finding, serialization."""

import numpy as np


def cumtrapz0(y, dx=None, x=None):
    """Cumulative trapezoid of samples ``y`` starting at 0.

    Returns an array of the same length as ``y`` whose first entry is 0 and
    whose i-th entry is the composite trapezoid integral over the first i
    cells.  Pass either a scalar spacing ``dx`` or an abscissa array ``x``.
    """
    y = np.asarray(y, dtype=np.float64)
    out = np.empty_like(y)
    out[0] = 0.0
    if x is not None:
        widths = np.diff(np.asarray(x, dtype=np.float64))
    else:
        widths = dx
    np.cumsum(0.5 * (y[1:] + y[:-1]) * widths, out=out[1:])
    return out


def true_runs(mask):
    """Maximal runs of True in a boolean array, as (start, stop) index pairs.

    ``stop`` is inclusive.  Returns a list, empty when nothing is set.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0 or not mask.any():
        return []
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    starts = edges[0::2]
    stops = edges[1::2] - 1
    return list(zip(starts.tolist(), stops.tolist()))


def fmt_float(v):
    """Serialize one float with 17 significant digits (shortest is lossy)."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return "%.17g" % float(v)


def write_json(path, obj):
    """Deterministic JSON writer: sorted keys, LF endings, 17-digit floats.

    Handles dicts, lists, strings, bools, None, ints and floats (including
    numpy scalars).  The stdlib encoder writes floats with shortest
    round-trip repr, which breaks the fixed-width output contract, hence
    this small custom serializer.
    """
    def emit(v, indent):
        pad = "  " * indent
        if isinstance(v, dict):
            if not v:
                return "{}"
            items = []
            for k in sorted(v):
                items.append('%s  "%s": %s' % (pad, k, emit(v[k], indent + 1)))
            return "{\n" + ",\n".join(items) + "\n%s}" % pad
        if isinstance(v, (list, tuple, np.ndarray)):
            seq = list(v)
            if not seq:
                return "[]"
            items = ["%s  %s" % (pad, emit(item, indent + 1)) for item in seq]
            return "[\n" + ",\n".join(items) + "\n%s]" % pad
        if isinstance(v, str):
            return '"%s"' % v.replace("\\", "\\\\").replace('"', '\\"')
        if v is None:
            return "null"
        if isinstance(v, (bool, np.bool_)):
            return "true" if v else "false"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return fmt_float(v)

    with open(path, "w", newline="\n") as fh:
        fh.write(emit(obj, 0))
        fh.write("\n")


def write_csv(path, header, columns):
    """Write named float columns as CSV with 17-significant-digit cells."""
    columns = [np.asarray(c) for c in columns]
    n = columns[0].shape[0]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(fmt_float(c[i]) for c in columns) + "\n")
