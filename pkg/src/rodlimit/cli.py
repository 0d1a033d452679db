"""Command-line front end.

Five subcommands cover the pipeline from a JSON run description to
delimited results and figures: ``validate`` checks the structure geometry
and reports its admissible thickness, ``cross-section`` computes the
homogenized twist/bend stiffness with its relaxation fields,
``solve`` minimizes the limit energy for the configured load scaling,
``decompose`` reconstructs thick 3D deformations from a converged solve
and tracks the rescaled-energy gap over a thickness sweep, and
``scaling-study`` fits the thickness exponents of the decomposition
norms on constructed deformation families.

Every run writes JSON reports (17-significant-digit floats, round-trip
safe), CSV field tables, and PNG figures into the output directory, and
repeated runs with the same configuration produce byte-identical files.
Exit codes: 0 on success, 1 on a domain error (bad configuration
content, inadmissible geometry, solver misuse), 2 on a usage error
(unknown flags, unreadable configuration path).
"""

import argparse
import csv
import json
import math
import os
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .config import ConfigError, parse_config
from .cross_section import build_disk_mesh, compute_A, solve_correctors
from .decompose import (
    blend_structure_decomposition,
    evaluate_3d_energy,
    junction_adapted_fields,
    make_scaling_family,
    sample_deformation_function,
    sample_elementary_deformation,
    scaling_study,
    synthesize_junction_loads,
)
from .limit_energy import assemble_J2
from .rotation import quat_from_matrix
from .skeleton import validate_junctions
from .solver import minimize_kappa1, minimize_kappa2

__all__ = ["main"]

_PNG_METADATA = {"Software": "rodlimit"}


class _DomainError(Exception):
    """A well-formed request that the model cannot satisfy."""


# ---------------------------------------------------------------------------
# serialization helpers


def _format_float(x):
    x = float(x)
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def _json_text(obj, indent=0):
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        rows = [
            f'{pad}  {json.dumps(str(k))}: {_json_text(v, indent + 1)}'
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(rows) + "\n" + pad + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(
            isinstance(v, (bool, int, float, str, np.bool_, np.integer, np.floating))
            for v in obj
        ):
            return "[" + ", ".join(_json_text(v) for v in obj) + "]"
        rows = [f"{pad}  {_json_text(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(rows) + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if obj is None:
        return "null"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_json_text(obj) + "\n")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [
                    format(float(x), ".17g") if isinstance(x, (float, np.floating)) else x
                    for x in row
                ]
            )


def _save_figure(fig, path):
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_validate(cfg, out_dir):
    report = validate_junctions(cfg.sk, cfg.sk.delta0)
    if cfg.material is not None:
        material_doc = {
            "lambda": cfg.material.lam,
            "mu": cfg.material.mu,
            "youngs_modulus": cfg.material.youngs_modulus,
            "poisson_ratio": cfg.material.poisson_ratio,
        }
    else:
        material_doc = {
            "q6_coercivity_lower": cfg.form.coercivity_lower,
            "q6_coercivity_upper": cfg.form.coercivity_upper,
        }
    doc = {
        "skeleton": cfg.sk.summary_dict(),
        "junctions": {
            "delta": report.delta,
            "ok": report.ok,
            "checks": report.checks,
            "violations": report.violations,
        },
        "material": material_doc,
        "loads": {
            "kappa": cfg.loads.kappa,
            "kappa_prime": cfg.loads.kappa_prime,
            "loaded_segments": sorted(
                cfg.sk.segments[i].name for i in cfg.loads.segment_loads
            ),
            "point_loads": [p.vertex for p in cfg.loads.point_loads],
        },
    }
    _write_json(os.path.join(out_dir, "validate.json"), doc)
    if not report.ok:
        raise _DomainError(
            f"junction geometry fails at delta = {report.delta:.6g}: "
            f"{len(report.violations)} violation(s), see validate.json"
        )
    return ["validate.json"]


def _isotropic_reference(mat):
    E = mat.youngs_modulus
    return np.diag([np.pi * mat.mu / 4.0, np.pi * E / 4.0, np.pi * E / 4.0])


def _cmd_cross_section(cfg, out_dir):
    level = cfg.params["mesh_level"]
    mesh = build_disk_mesh(level)
    correctors = solve_correctors(cfg.form, mesh)
    A = compute_A(cfg.form, mesh, correctors)
    doc = {
        "mesh_level": level,
        "nodes": mesh.node_count,
        "triangles": len(mesh.triangles),
        "A": A.matrix,
        "max_off_diagonal": float(np.max(np.abs(A.matrix - np.diag(np.diag(A.matrix))))),
        "corrector_residuals": correctors.residuals,
    }
    if cfg.material is not None:
        ref = _isotropic_reference(cfg.material)
        doc["isotropic_reference"] = ref
        doc["max_relative_diagonal_error"] = float(
            np.max(np.abs(np.diag(A.matrix) - np.diag(ref)) / np.diag(ref))
        )
        doc["material"] = {"lambda": cfg.material.lam, "mu": cfg.material.mu}
    _write_json(os.path.join(out_dir, "cross_section.json"), doc)

    header = ["node_x", "node_y"]
    for i in range(1, 4):
        header += [f"chi{i}_x", f"chi{i}_y", f"chi{i}_z"]
    rows = []
    for n in range(mesh.node_count):
        row = [float(mesh.nodes[n, 0]), float(mesh.nodes[n, 1])]
        for i in range(3):
            row += [float(c) for c in correctors.fields[i, n]]
        rows.append(row)
    _write_csv(os.path.join(out_dir, "correctors.csv"), header, rows)

    fig, axes = plt.subplots(1, 3, figsize=(12, 4), constrained_layout=True)
    for i, ax in enumerate(axes):
        mag = np.linalg.norm(correctors.fields[i], axis=1)
        tpc = ax.tripcolor(
            mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.triangles, mag, shading="gouraud"
        )
        fig.colorbar(tpc, ax=ax, shrink=0.8)
        ax.set_title(f"|chi_{i + 1}|")
        ax.set_aspect("equal")
    _save_figure(fig, os.path.join(out_dir, "correctors.png"))
    return ["cross_section.json", "correctors.csv", "correctors.png"]


def _require_clamped(sk):
    if not sk.clamped:
        raise _DomainError(
            "no clamped extremity: the limit models need at least one entry "
            "in structure.clamped"
        )


def _solve_limit(cfg):
    """Run the solver matching the configured kappa.

    Returns ``(V, R, report, A)`` where ``A`` is ``None`` on the relaxed
    (kappa < 2) path.
    """
    _require_clamped(cfg.sk)
    kappa = cfg.loads.kappa
    if kappa == 2.0:
        mesh = build_disk_mesh(cfg.params["mesh_level"])
        A = compute_A(cfg.form, mesh)
        V, R, report = minimize_kappa2(cfg.sk, A, cfg.loads, cfg.solve_options)
        return V, R, report, A
    if 1.0 < kappa < 2.0:
        V, R, report = minimize_kappa1(cfg.sk, cfg.loads, cfg.solve_options)
        return V, R, report, None
    raise _DomainError(
        f"no limit solver for kappa = {kappa:g}: the quadratic model needs "
        "kappa = 2 and the relaxed model 1 < kappa < 2"
    )


def _centerline_rows(cfg, V):
    rows = []
    for ei, e in enumerate(cfg.sk.edges):
        seg = cfg.sk.segments[e.segment]
        for s, v in zip(V.edge_arcs(ei), V.edge_values(ei)):
            ref = seg.origin + s * seg.direction
            rows.append([seg.name, float(s), *map(float, ref), *map(float, v)])
    return rows


def _write_rotation_csv(cfg, R, path):
    """Rotation field table: unit quaternions for nodal fields, interval
    matrices for the hull-valued relaxed fields."""
    if R.kind == "nodal":
        rows = []
        for ei, e in enumerate(cfg.sk.edges):
            name = cfg.sk.segments[e.segment].name
            for s, mat in zip(R.edge_arcs(ei), R.edge_values(ei)):
                q = quat_from_matrix(mat)
                rows.append([name, float(s), *map(float, q)])
        _write_csv(path, ["segment", "s", "q_w", "q_x", "q_y", "q_z"], rows)
        return
    rows = []
    for ei, e in enumerate(cfg.sk.edges):
        name = cfg.sk.segments[e.segment].name
        arcs = R.edge_arcs(ei)
        for k, mat in enumerate(R.edge_values(ei)):
            rows.append(
                [name, float(arcs[k]), float(arcs[k + 1]), *map(float, np.ravel(mat))]
            )
    header = ["segment", "s_lo", "s_hi"] + [f"M{i}{j}" for i in range(1, 4) for j in range(1, 4)]
    _write_csv(path, header, rows)


def _centerline_figure(cfg, V, path):
    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(projection="3d")
    for ei, e in enumerate(cfg.sk.edges):
        seg = cfg.sk.segments[e.segment]
        arcs = np.asarray(V.edge_arcs(ei))
        ref = seg.origin[None, :] + arcs[:, None] * seg.direction[None, :]
        vals = np.asarray(V.edge_values(ei))
        ax.plot(*ref.T, color="0.6", lw=1.0)
        ax.plot(*vals.T, color="C0", lw=1.8)
    ax.set_title("centerline: reference (grey) and deformed (blue)")
    _save_figure(fig, path)


def _cmd_solve(cfg, out_dir):
    V, R, report, A = _solve_limit(cfg)
    kappa = cfg.loads.kappa
    doc = {
        "kappa": kappa,
        "energy": report.energy,
        "converged": report.converged,
        "iterations": report.iterations,
        "grad_norm": report.grad_norm,
        "max_closure_residual": report.max_closure_residual,
        "message": report.message,
    }
    produced = ["solve.json", "centerline.csv", "rotation.csv", "centerline.png"]
    if A is not None:
        doc["A"] = A.matrix
        doc["mesh_level"] = cfg.params["mesh_level"]
    else:
        doc["rotation_samples"] = cfg.solve_options.rotation_samples
        doc["lp_intervals_per_edge"] = cfg.solve_options.lp_intervals_per_edge
    _write_json(os.path.join(out_dir, "solve.json"), doc)

    _write_csv(
        os.path.join(out_dir, "centerline.csv"),
        ["segment", "s", "ref_x", "ref_y", "ref_z", "V_x", "V_y", "V_z"],
        _centerline_rows(cfg, V),
    )
    _write_rotation_csv(cfg, R, os.path.join(out_dir, "rotation.csv"))
    _centerline_figure(cfg, V, os.path.join(out_dir, "centerline.png"))

    if report.gamma:
        rows = []
        for si in sorted(report.gamma):
            s_mid, rates = report.gamma[si]
            name = cfg.sk.segments[si].name
            for s, g in zip(s_mid, rates):
                rows.append([name, float(s), *map(float, g)])
        _write_csv(
            os.path.join(out_dir, "gamma.csv"),
            ["segment", "s_mid", "gamma1", "gamma2", "gamma3"],
            rows,
        )
        fig, axes = plt.subplots(
            1, len(report.gamma), figsize=(4 * len(report.gamma), 3.2),
            squeeze=False, constrained_layout=True,
        )
        for ax, si in zip(axes[0], sorted(report.gamma)):
            s_mid, rates = report.gamma[si]
            for j in range(3):
                ax.plot(s_mid, rates[:, j], label=f"gamma{j + 1}")
            ax.set_title(cfg.sk.segments[si].name)
            ax.set_xlabel("s")
            ax.legend(fontsize=8)
        _save_figure(fig, os.path.join(out_dir, "gamma.png"))
        produced += ["gamma.csv", "gamma.png"]
    return produced


def _knot_point_loads(cfg):
    """Group the configured point loads by knot index; others by vertex."""
    by_knot = {}
    elsewhere = []
    knot_keys = {f"knot:{k}": k for k in range(len(cfg.sk.knots))}
    for p in cfg.loads.point_loads:
        if p.vertex in knot_keys:
            ki = knot_keys[p.vertex]
            force, moment = by_knot.get(ki, (np.zeros(3), np.zeros((3, 3))))
            by_knot[ki] = (force + p.force, moment + p.moment)
        else:
            elsewhere.append(p)
    return by_knot, elsewhere


_FIELD_COLUMNS = ["segment", "s", "Y2", "Y3", "v_x", "v_y", "v_z"]


def _read_field_csv(cfg, path):
    """Load a sampled deformation table onto the canonical station layout.

    The table must cover every sample point of the layout that
    ``sample_deformation_function`` builds for the configured thickness;
    rows may come in any order.
    """
    deltas = cfg.params["deltas"]
    if len(deltas) != 1:
        raise _DomainError(
            "decomposing a sampled field needs exactly one thickness: pass "
            "--deltas with the single value the table was sampled at"
        )
    delta = float(deltas[0])
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != _FIELD_COLUMNS:
                raise _DomainError(
                    "field table must have columns " + ",".join(_FIELD_COLUMNS)
                )
            rows = list(reader)
    except OSError as exc:
        raise _DomainError(f"cannot read field table: {exc}") from exc

    names = {seg.name: i for i, seg in enumerate(cfg.sk.segments)}
    per_seg = {i: [] for i in range(len(cfg.sk.segments))}
    for ln, row in enumerate(rows, start=2):
        if len(row) != 7:
            raise _DomainError(f"field table line {ln}: expected 7 columns")
        if row[0] not in names:
            raise _DomainError(f"field table line {ln}: unknown segment {row[0]!r}")
        try:
            nums = [float(tok) for tok in row[1:]]
        except ValueError as exc:
            raise _DomainError(f"field table line {ln}: non-numeric entry") from exc
        per_seg[names[row[0]]].append(nums)

    samples = sample_deformation_function(cfg.sk, delta, lambda p: p)
    for i in range(samples.n_segments):
        name = cfg.sk.segments[i].name
        n, m = len(samples.stations[i]), len(samples.Y)
        want = np.column_stack(
            [np.repeat(samples.stations[i], m), np.tile(samples.Y, (n, 1))]
        )
        got = np.asarray(per_seg[i], dtype=float).reshape(-1, 6)
        if len(got) != len(want):
            raise _DomainError(
                f"segment {name!r}: {len(got)} rows, but the delta = {delta:g} "
                f"layout has {len(want)} sample points"
            )
        order_w = np.lexsort((want[:, 2], want[:, 1], want[:, 0]))
        order_g = np.lexsort((got[:, 2], got[:, 1], got[:, 0]))
        if np.max(np.abs(want[order_w] - got[order_g][:, :3])) > 1e-9:
            raise _DomainError(
                f"segment {name!r}: sample points do not match the "
                f"delta = {delta:g} layout"
            )
        vals = np.empty((len(want), 3))
        vals[order_w] = got[order_g][:, 3:]
        samples.values[i] = vals.reshape(n, m, 3)
    return samples


def _decompose_field(cfg, out_dir, path):
    """Elementary decomposition of an externally sampled deformation."""
    samples = _read_field_csv(cfg, path)
    try:
        result = blend_structure_decomposition(samples)
    except ValueError as exc:
        raise _DomainError(str(exc)) from exc

    doc = {
        "delta": samples.delta,
        "norms": result.norms,
        "junction_fits": [
            {
                "knot": fit.knot_index,
                "translation": fit.translation,
                "rotation_quaternion": quat_from_matrix(fit.rotation),
                "rms_residual": fit.rms,
                "degenerate": fit.degenerate,
            }
            for fit in result.junction_fits
        ],
    }
    _write_json(os.path.join(out_dir, "decompose.json"), doc)

    rows = []
    rms_curves = []
    for i, seg in enumerate(cfg.sk.segments):
        rms = np.sqrt(
            np.einsum("kmi,kmi->km", result.vbar[i], result.vbar[i])
            @ samples.cross_w
            / np.pi
        )
        rms_curves.append((seg.name, samples.stations[i], rms))
        for k, s in enumerate(samples.stations[i]):
            q = quat_from_matrix(result.rod_R[i][k])
            rows.append(
                [seg.name, float(s), *map(float, result.rod_V[i][k]),
                 *map(float, q), float(rms[k])]
            )
    _write_csv(
        os.path.join(out_dir, "fields.csv"),
        ["segment", "s", "V_x", "V_y", "V_z", "q_w", "q_x", "q_y", "q_z",
         "rms_residual"],
        rows,
    )

    fig, ax = plt.subplots(figsize=(5.5, 4), constrained_layout=True)
    for name, s, rms in rms_curves:
        ax.plot(s, rms, label=name)
    ax.set_xlabel("arc length s")
    ax.set_ylabel("cross-section RMS of the residual")
    ax.set_title(f"decomposition residual, delta = {samples.delta:g}")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    _save_figure(fig, os.path.join(out_dir, "residual.png"))
    return ["decompose.json", "fields.csv", "residual.png"]


def _cmd_decompose(cfg, out_dir):
    field = cfg.params.get("field_table")
    if field is not None:
        return _decompose_field(cfg, out_dir, field)
    kappa = cfg.loads.kappa
    if kappa != 2.0:
        raise _DomainError(
            "the 3D reconstruction needs kappa = 2: the relaxed model's "
            "hull-valued fields are not deformations of a thick structure"
        )
    if cfg.material is None:
        raise _DomainError(
            "the 3D energy needs Lame constants: a raw quadratic-form "
            "material only defines the limit model"
        )
    deltas = sorted(cfg.params["deltas"], reverse=True)
    if deltas[0] > cfg.sk.delta0 * (1.0 + 1e-12):
        raise _DomainError(
            f"thickness {deltas[0]:g} exceeds the admissible bound "
            f"delta0 = {cfg.sk.delta0:g}"
        )
    V, R, report, A = _solve_limit(cfg)
    limit = assemble_J2(V, R, A, cfg.loads, cfg.sk)
    by_knot, end_loads = _knot_point_loads(cfg)

    kp = cfg.loads.kappa_prime
    scaled, gaps, elastic, work = [], [], [], []
    for d in deltas:
        V2, R2 = junction_adapted_fields(V, R, cfg.sk, d)
        samples = sample_elementary_deformation(V2, R2, cfg.sk, d)
        junction_fields = {
            ki: synthesize_junction_loads(samples, ki, force=f, moment=m)
            for ki, (f, m) in by_knot.items()
        }
        energy = evaluate_3d_energy(
            samples, cfg.material, cfg.loads, kappa, junction_fields=junction_fields
        )
        # Point loads at free ends act on a rigidly moving end cross-section,
        # so their work reduces exactly to the limit pairing.
        end_work = 0.0
        for p in end_loads:
            a = cfg.sk.position(p.vertex)
            end_work += float(p.force @ (V2.at_vertex(p.vertex) - a))
            end_work += float(np.sum((R2.at_vertex(p.vertex) - np.eye(3)) * p.moment))
        total = energy.total - d ** (kp + 2.0) * end_work
        value = total / d ** (kp + 2.0)
        scaled.append(value)
        denom = max(abs(limit.total), 1e-30)
        gaps.append(abs(value - limit.total) / denom)
        elastic.append(energy.elastic / d ** (kp + 2.0))
        work.append(energy.force_work / d ** (kp + 2.0) + end_work)

    doc = {
        "kappa": kappa,
        "limit_energy": limit.total,
        "limit_elastic": limit.elastic,
        "limit_load_work": limit.load_work,
        "deltas": deltas,
        "scaled_3d_energy": scaled,
        "scaled_3d_elastic": elastic,
        "scaled_3d_work": work,
        "relative_gaps": gaps,
        "monotone_decreasing": all(a >= b for a, b in zip(gaps, gaps[1:])),
        "solver_converged": report.converged,
    }
    _write_json(os.path.join(out_dir, "decompose.json"), doc)
    _write_csv(
        os.path.join(out_dir, "gap.csv"),
        ["delta", "scaled_3d_energy", "relative_gap"],
        list(zip(deltas, scaled, gaps)),
    )

    fig, ax = plt.subplots(figsize=(5, 4), constrained_layout=True)
    ax.loglog(deltas, gaps, "o-")
    ax.set_xlabel("delta")
    ax.set_ylabel("relative energy gap")
    ax.set_title("rescaled 3D energy vs limit energy")
    ax.grid(True, which="both", alpha=0.3)
    _save_figure(fig, os.path.join(out_dir, "gap.png"))
    return ["decompose.json", "gap.csv", "gap.png"]


def _cmd_scaling_study(cfg, out_dir):
    kappa = cfg.loads.kappa
    try:
        family = make_scaling_family(
            cfg.sk, cfg.params["family"], kappa,
            amplitude=cfg.params["amplitude"],
            stretch=cfg.params["stretch"],
            warp=cfg.params["warp"],
        )
        report = scaling_study(family, cfg.params["deltas"])
    except ValueError as exc:
        raise _DomainError(str(exc)) from exc

    doc = {
        "family": report.family,
        "kappa": report.kappa,
        "deltas": report.deltas,
        "norms": report.norms,
        "slopes": report.slopes,
        "expected": report.expected,
        "passed": report.passed,
        "tolerance": report.tolerance,
        "all_passed": report.all_passed,
    }
    _write_json(os.path.join(out_dir, "scaling_study.json"), doc)
    _write_csv(
        os.path.join(out_dir, "scaling_norms.csv"),
        ["delta"] + list(report.norms),
        [
            [d] + [report.norms[k][i] for k in report.norms]
            for i, d in enumerate(report.deltas)
        ],
    )

    fig, ax = plt.subplots(figsize=(5.5, 4.5), constrained_layout=True)
    for key, vals in report.norms.items():
        if all(v < 1e-12 for v in vals):
            continue
        slope = report.slopes[key]
        label = f"{key} ({slope:+.2f})" if slope is not None else key
        ax.loglog(report.deltas, vals, "o-", label=label)
    ax.set_xlabel("delta")
    ax.set_ylabel("norm")
    ax.set_title(f"{report.family} family, kappa = {report.kappa:g}")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    _save_figure(fig, os.path.join(out_dir, "scaling.png"))
    return ["scaling_study.json", "scaling_norms.csv", "scaling.png"]


_COMMANDS = {
    "validate": _cmd_validate,
    "cross-section": _cmd_cross_section,
    "solve": _cmd_solve,
    "decompose": _cmd_decompose,
    "scaling-study": _cmd_scaling_study,
}


# ---------------------------------------------------------------------------
# argument handling


def _deltas_flag(text):
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad thickness list {text!r}") from exc
    if not values or any(v <= 0.0 for v in values):
        raise argparse.ArgumentTypeError("thicknesses must be positive numbers")
    return tuple(sorted(values, reverse=True))


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="rodlimit",
        description="Limit models of thin elastic rod structures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run description")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--kappa", type=float, help="load-scaling exponent override")
        sp.add_argument(
            "--mesh-level", type=int, dest="mesh_level",
            help="disk mesh refinement override",
        )
        sp.add_argument("--seed", type=int, help="solver seed override")
        sp.add_argument(
            "--deltas", type=_deltas_flag,
            help="comma-separated thickness sweep override",
        )
        if name == "decompose":
            sp.add_argument(
                "--field",
                help="CSV table of deformation samples to decompose "
                     "instead of reconstructing from a solve",
            )
        if name == "scaling-study":
            sp.add_argument(
                "--family", choices=("twist", "bend", "mixed"),
                help="deformation family override",
            )
    return parser


def _apply_overrides(cfg, args):
    if args.out is not None:
        cfg.out_dir = args.out
    if args.kappa is not None:
        if args.kappa < 1.0:
            raise _DomainError(f"kappa must be at least 1, got {args.kappa:g}")
        cfg.loads.kappa = args.kappa
    if args.mesh_level is not None:
        if args.mesh_level < 0:
            raise _DomainError(f"mesh level must be nonnegative, got {args.mesh_level}")
        cfg.params["mesh_level"] = args.mesh_level
    if args.seed is not None:
        cfg.solve_options.seed = args.seed
    if args.deltas is not None:
        cfg.params["deltas"] = args.deltas
    if getattr(args, "field", None) is not None:
        cfg.params["field_table"] = args.field
    if getattr(args, "family", None) is not None:
        cfg.params["family"] = args.family


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except OSError as exc:
        print(f"usage error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print("error: invalid configuration:", file=sys.stderr)
        for line in exc.errors:
            print(f"  {line}", file=sys.stderr)
        return 1

    try:
        _apply_overrides(cfg, args)
        os.makedirs(cfg.out_dir, exist_ok=True)
        produced = _COMMANDS[args.command](cfg, cfg.out_dir)
    except _DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name in produced:
        print(os.path.join(cfg.out_dir, name))
    return 0


if __name__ == "__main__":
    sys.exit(main())
