"""Configuration files for the command-line tools.

A run is described by one JSON document with four blocks: ``structure``
(the rod skeleton), ``material`` (isotropic Lame constants), ``loads``
(line densities per segment plus reduced point loads at vertices), and the
optional ``solver`` and ``params`` blocks tuning the minimizers and the
subcommands.  :func:`parse_config` turns such a document into live library
objects, collecting every schema violation instead of stopping at the
first, so a bad file is diagnosed in one round trip.

The schema is deliberately close to the library constructors: segment
entries feed :func:`rodlimit.skeleton.build_skeleton` unchanged, load
entries become :class:`rodlimit.loads.SegmentLoad` tables and
:class:`rodlimit.loads.PointLoad` values, and the ``solver`` block maps
one-to-one onto :class:`rodlimit.solver.SolveOptions` fields.
"""

import json

import numpy as np

from .loads import LoadSet, PointLoad, SegmentLoad
from .material import QForm6, SvkMaterial, isotropic_q6
from .rotation import skew
from .skeleton import build_skeleton
from .solver import SolveOptions

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_data"]


class ConfigError(ValueError):
    """All schema violations of one configuration document.

    ``errors`` is a list of human-readable strings, each prefixed by the
    JSON path of the offending value.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


_PARAM_DEFAULTS = {
    "mesh_level": 2,
    "deltas": (0.02, 0.01, 0.005, 0.0025),
    "family": "twist",
    "amplitude": 0.025,
    "stretch": 0.1,
    "warp": 1.0,
}

_FAMILY_KINDS = ("twist", "bend", "mixed")


class _Collector:
    """Accumulates error strings with JSON-path context."""

    def __init__(self):
        self.errors = []

    def add(self, path, message):
        self.errors.append(f"{path}: {message}")

    def __bool__(self):
        return bool(self.errors)


def _get_block(data, key, col, required=True):
    if key not in data:
        if required:
            col.add(key, "required block is missing")
        return None
    block = data[key]
    if not isinstance(block, dict):
        col.add(key, f"expected an object, got {type(block).__name__}")
        return None
    return block


def _check_keys(block, path, allowed, col):
    for key in block:
        if key not in allowed:
            col.add(f"{path}.{key}", "unknown key")


def _vector(value, path, col, length=3):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        col.add(path, "expected a list of numbers")
        return None
    if arr.shape != (length,):
        col.add(path, f"expected {length} numbers, got shape {arr.shape}")
        return None
    return arr


def _number(value, path, col, kind=float, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        col.add(path, f"expected a number, got {type(value).__name__}")
        return None
    if kind is int and not float(value).is_integer():
        col.add(path, f"expected an integer, got {value}")
        return None
    value = kind(value)
    if positive and value <= 0:
        col.add(path, f"expected a positive value, got {value}")
        return None
    return value


def _parse_structure(data, col):
    block = _get_block(data, "structure", col)
    if block is None:
        return None
    _check_keys(block, "structure", {"segments", "clamped", "rho0", "delta0"}, col)
    raw_segments = block.get("segments")
    if not isinstance(raw_segments, list) or not raw_segments:
        col.add("structure.segments", "expected a nonempty list of segment objects")
        return None

    specs = []
    names = set()
    for i, entry in enumerate(raw_segments):
        path = f"structure.segments[{i}]"
        if not isinstance(entry, dict):
            col.add(path, "expected an object")
            continue
        _check_keys(entry, path, {"name", "endpoints", "origin", "direction", "length", "normal"}, col)
        spec = {}
        name = entry.get("name", f"seg{i}")
        if not isinstance(name, str) or not name:
            col.add(f"{path}.name", "expected a nonempty string")
            continue
        if name in names:
            col.add(f"{path}.name", f"duplicate segment name {name!r}")
            continue
        names.add(name)
        spec["name"] = name
        if "endpoints" in entry:
            pts = entry["endpoints"]
            if not isinstance(pts, list) or len(pts) != 2:
                col.add(f"{path}.endpoints", "expected [start, end]")
                continue
            a = _vector(pts[0], f"{path}.endpoints[0]", col)
            b = _vector(pts[1], f"{path}.endpoints[1]", col)
            if a is None or b is None:
                continue
            spec["endpoints"] = (a, b)
        elif {"origin", "direction", "length"} <= set(entry):
            o = _vector(entry["origin"], f"{path}.origin", col)
            d = _vector(entry["direction"], f"{path}.direction", col)
            ln = _number(entry["length"], f"{path}.length", col, positive=True)
            if o is None or d is None or ln is None:
                continue
            spec.update(origin=o, direction=d, length=ln)
        else:
            col.add(path, "needs either endpoints or origin/direction/length")
            continue
        if "normal" in entry:
            nrm = _vector(entry["normal"], f"{path}.normal", col)
            if nrm is None:
                continue
            spec["normal"] = nrm
        specs.append(spec)

    clamped = block.get("clamped", [])
    if not isinstance(clamped, list) or not all(isinstance(c, str) for c in clamped):
        col.add("structure.clamped", "expected a list of extremity ids like 'rod:start'")
        clamped = []
    kwargs = {}
    if "rho0" in block:
        rho0 = _number(block["rho0"], "structure.rho0", col, positive=True)
        if rho0 is not None:
            kwargs["rho0"] = rho0
    if "delta0" in block:
        d0 = _number(block["delta0"], "structure.delta0", col, positive=True)
        if d0 is not None:
            kwargs["delta0"] = d0
    if col:
        return None
    try:
        return build_skeleton(specs, clamped=tuple(clamped), **kwargs)
    except ValueError as exc:
        col.add("structure", str(exc))
        return None


def _parse_material(data, col):
    """Returns ``(SvkMaterial or None, QForm6 or None)``.

    Two exclusive forms: Lame constants (isotropic, enables 3D evaluation)
    or a full 6x6 strain form matrix (anisotropic, limit models only).
    """
    block = _get_block(data, "material", col)
    if block is None:
        return None, None
    _check_keys(block, "material", {"lambda", "mu", "q6"}, col)
    if "q6" in block:
        if "lambda" in block or "mu" in block:
            col.add("material", "give either Lame constants or a q6 matrix, not both")
            return None, None
        try:
            M = np.asarray(block["q6"], dtype=float)
        except (TypeError, ValueError):
            col.add("material.q6", "expected a 6x6 matrix of numbers")
            return None, None
        if M.shape != (6, 6):
            col.add("material.q6", f"expected a 6x6 matrix, got shape {M.shape}")
            return None, None
        try:
            return None, QForm6(matrix=M)
        except ValueError as exc:
            col.add("material.q6", str(exc))
            return None, None
    lam = _number(block.get("lambda", 0.0), "material.lambda", col)
    mu = _number(block.get("mu"), "material.mu", col) if "mu" in block else None
    if "mu" not in block:
        col.add("material.mu", "required key is missing")
    if col or lam is None or mu is None:
        return None, None
    try:
        mat = SvkMaterial(lam=lam, mu=mu)
    except ValueError as exc:
        col.add("material", str(exc))
        return None, None
    return mat, isotropic_q6(mat)


def _segment_index(sk, name, path, col):
    for i, seg in enumerate(sk.segments):
        if seg.name == name:
            return i
    col.add(path, f"unknown segment {name!r}")
    return None


def _parse_segment_load(entry, i, sk, col):
    path = f"loads.segment[{i}]"
    if not isinstance(entry, dict):
        col.add(path, "expected an object")
        return None
    _check_keys(entry, path, {"segment", "f", "g_n", "g_b", "table"}, col)
    name = entry.get("segment")
    if not isinstance(name, str):
        col.add(f"{path}.segment", "expected a segment name")
        return None
    idx = None
    if sk is not None:
        idx = _segment_index(sk, name, f"{path}.segment", col)
        if idx is None:
            return None
    if "table" in entry:
        if any(k in entry for k in ("f", "g_n", "g_b")):
            col.add(path, "give either a table or constant densities, not both")
            return None
        try:
            table = np.asarray(entry["table"], dtype=float)
        except (TypeError, ValueError):
            col.add(f"{path}.table", "expected rows of 10 numbers")
            return None
        if table.ndim != 2 or table.shape[1] != 10:
            col.add(f"{path}.table", "rows must be (s, f[3], g_n[3], g_b[3])")
            return None
    else:
        f = _vector(entry.get("f", (0.0, 0.0, 0.0)), f"{path}.f", col)
        gn = _vector(entry.get("g_n", (0.0, 0.0, 0.0)), f"{path}.g_n", col)
        gb = _vector(entry.get("g_b", (0.0, 0.0, 0.0)), f"{path}.g_b", col)
        if f is None or gn is None or gb is None:
            return None
        length = sk.segments[idx].length if idx is not None else 1.0
        row = np.concatenate([[0.0], f, gn, gb])
        table = np.vstack([row, row])
        table[1, 0] = length
    if idx is None:
        return None
    try:
        return idx, SegmentLoad(table=table)
    except ValueError as exc:
        col.add(f"{path}.table", str(exc))
        return None


def _parse_point_load(entry, i, sk, col):
    path = f"loads.point[{i}]"
    if not isinstance(entry, dict):
        col.add(path, "expected an object")
        return None
    _check_keys(entry, path, {"vertex", "force", "moment", "couple"}, col)
    vertex = entry.get("vertex")
    if not isinstance(vertex, str):
        col.add(f"{path}.vertex", "expected a vertex id")
        return None
    if sk is not None and vertex not in sk.vertices:
        known = ", ".join(sorted(sk.vertices))
        col.add(f"{path}.vertex", f"unknown vertex {vertex!r} (skeleton has: {known})")
        return None
    force = np.zeros(3)
    if "force" in entry:
        v = _vector(entry["force"], f"{path}.force", col)
        if v is None:
            return None
        force = v
    moment = np.zeros((3, 3))
    if "moment" in entry and "couple" in entry:
        col.add(path, "give either a moment matrix or a couple vector, not both")
        return None
    if "moment" in entry:
        try:
            moment = np.asarray(entry["moment"], dtype=float)
        except (TypeError, ValueError):
            moment = None
        if moment is None or moment.shape != (3, 3):
            col.add(f"{path}.moment", "expected a 3x3 matrix")
            return None
    elif "couple" in entry:
        v = _vector(entry["couple"], f"{path}.couple", col)
        if v is None:
            return None
        moment = skew(v)
    return PointLoad(vertex=vertex, force=force, moment=moment)


def _parse_loads(data, sk, col):
    block = _get_block(data, "loads", col)
    if block is None:
        return None
    _check_keys(block, "loads", {"kappa", "segment", "point"}, col)
    kappa = _number(block.get("kappa", 2.0), "loads.kappa", col)
    if kappa is not None and kappa < 1.0:
        col.add("loads.kappa", f"expected kappa >= 1, got {kappa}")
        kappa = None

    segment_loads = {}
    raw_segment = block.get("segment", [])
    if not isinstance(raw_segment, list):
        col.add("loads.segment", "expected a list")
        raw_segment = []
    for i, entry in enumerate(raw_segment):
        parsed = _parse_segment_load(entry, i, sk, col)
        if parsed is not None:
            idx, load = parsed
            if idx in segment_loads:
                col.add(f"loads.segment[{i}]", "segment is loaded twice")
            else:
                segment_loads[idx] = load

    point_loads = []
    raw_point = block.get("point", [])
    if not isinstance(raw_point, list):
        col.add("loads.point", "expected a list")
        raw_point = []
    for i, entry in enumerate(raw_point):
        parsed = _parse_point_load(entry, i, sk, col)
        if parsed is not None:
            point_loads.append(parsed)

    if col or kappa is None:
        return None
    return LoadSet(kappa=kappa, segment_loads=segment_loads, point_loads=point_loads)


def _parse_solver(data, col):
    block = data.get("solver", {})
    if not isinstance(block, dict):
        col.add("solver", f"expected an object, got {type(block).__name__}")
        return None
    defaults = SolveOptions()
    int_fields = {
        "nodes_per_edge", "max_iters", "outer_max",
        "rotation_samples", "lp_intervals_per_edge", "seed",
    }
    float_fields = {
        "grad_tol", "armijo_c", "closure_tol", "penalty_init", "penalty_growth",
    }
    kwargs = {}
    for key, value in block.items():
        if key in int_fields:
            v = _number(value, f"solver.{key}", col, kind=int)
        elif key in float_fields:
            v = _number(value, f"solver.{key}", col)
        else:
            col.add(f"solver.{key}", "unknown key")
            continue
        if v is not None:
            kwargs[key] = v
    if col:
        return None
    try:
        return SolveOptions(**{**defaults.__dict__, **kwargs})
    except ValueError as exc:
        col.add("solver", str(exc))
        return None


def _parse_params(data, col):
    block = data.get("params", {})
    if not isinstance(block, dict):
        col.add("params", f"expected an object, got {type(block).__name__}")
        return None
    params = dict(_PARAM_DEFAULTS)
    for key, value in block.items():
        if key == "mesh_level":
            v = _number(value, "params.mesh_level", col, kind=int)
            if v is not None and v < 0:
                col.add("params.mesh_level", f"expected a nonnegative level, got {v}")
            elif v is not None:
                params[key] = v
        elif key == "deltas":
            if not isinstance(value, list) or not value:
                col.add("params.deltas", "expected a nonempty list of thicknesses")
                continue
            out = []
            for j, d in enumerate(value):
                v = _number(d, f"params.deltas[{j}]", col, positive=True)
                if v is not None:
                    out.append(v)
            if len(out) == len(value):
                params[key] = tuple(sorted(out, reverse=True))
        elif key == "family":
            if value not in _FAMILY_KINDS:
                col.add("params.family", f"expected one of {_FAMILY_KINDS}, got {value!r}")
            else:
                params[key] = value
        elif key in ("amplitude", "stretch", "warp"):
            v = _number(value, f"params.{key}", col)
            if v is not None:
                params[key] = v
        else:
            col.add(f"params.{key}", "unknown key")
    if col:
        return None
    return params


class RunConfig:
    """A fully validated run description.

    Attributes
    ----------
    sk : Skeleton
    material : SvkMaterial or None
        ``None`` when the material was given as a raw strain form; the 3D
        evaluation paths need Lame constants and reject such configs.
    form : QForm6
        The cross-section strain form, from the Lame constants or verbatim.
    loads : LoadSet
    solve_options : SolveOptions
    out_dir : str
    params : dict
        Subcommand tuning: ``mesh_level``, ``deltas``, ``family``,
        ``amplitude``, ``stretch``, ``warp``.
    """

    def __init__(self, sk, material, form, loads, solve_options, out_dir, params):
        self.sk = sk
        self.material = material
        self.form = form
        self.loads = loads
        self.solve_options = solve_options
        self.out_dir = out_dir
        self.params = params


def parse_config_data(data):
    """Validate an already-decoded configuration object.

    Raises :class:`ConfigError` carrying every violation found; the error
    list covers all blocks, not just the first failing one.
    """
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected a JSON object"])
    col = _Collector()
    _check_keys(
        data, "top level",
        {"structure", "material", "loads", "solver", "params", "output"}, col,
    )

    block_errors = []

    def run_block(fn, *args):
        sub = _Collector()
        result = fn(*args, sub)
        block_errors.extend(sub.errors)
        return result

    sk = run_block(_parse_structure, data)
    material, form = run_block(_parse_material, data)
    loads = run_block(_parse_loads, data, sk)
    solve_options = run_block(_parse_solver, data)
    params = run_block(_parse_params, data)

    out_dir = "out"
    output = data.get("output", {})
    if not isinstance(output, dict):
        col.add("output", "expected an object")
    else:
        _check_keys(output, "output", {"directory"}, col)
        if "directory" in output:
            if not isinstance(output["directory"], str) or not output["directory"]:
                col.add("output.directory", "expected a nonempty path")
            else:
                out_dir = output["directory"]

    errors = col.errors + block_errors
    if errors:
        raise ConfigError(errors)
    return RunConfig(sk, material, form, loads, solve_options, out_dir, params)


def parse_config(path):
    """Load and validate the JSON configuration at ``path``.

    Returns a :class:`RunConfig`; raises :class:`ConfigError` listing every
    schema violation, or ``OSError`` / ``json.JSONDecodeError`` when the
    file cannot be read at all.
    """
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return parse_config_data(data)
