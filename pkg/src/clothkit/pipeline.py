"""Stage drivers behind the CLI: manifest loading, per-frame orchestration.

A manifest (JSON) lists the sequence inputs relative to its own directory:
template, weights, pose document, template boundary indices, and per-frame
scan / boundary / (optional) ground-truth paths. Stages read one manifest
and write a new one next to their outputs, so stages chain by file only.
"""

from __future__ import annotations

import concurrent.futures as cf
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .geometry import load_obj, load_point_cloud, save_obj, with_computed_normals
from .io_utils import read_json, write_json, write_report
from .normalmaps import (
    DEFAULT_HR_CUTOFF,
    DEFAULT_RESOLUTION,
    bake_hr,
    bake_lr,
    load_normal_map,
    save_normal_map,
    sequence_temporal_loss,
)
from .regression import (
    ControlLayout,
    build_control_sequence,
    evaluate_mse,
    fit_pose_regressor,
    load_regressor,
    predict,
    save_regressor,
    vertex_rms,
)
from .registration import (
    BoundarySets,
    RegistrationConfig,
    build_graph,
    graph_from_skinning,
    register,
)
from .skinning import load_pose_sequence, load_skin_weights, unskin
from .subspace import fit as fit_subspace_model
from .subspace import load_model, project, reconstruct, save_model
from .synth import MANIFEST_FORMAT, load_boundary_indices


@dataclass
class SequenceInputs:
    root: Path
    manifest: dict
    template_path: Path
    weights_path: Path
    poses_path: Path
    boundary_template_path: Path

    @property
    def frames(self):
        return self.manifest["frames"]

    def frame_path(self, frame: dict, key: str) -> Path:
        return self.root / frame[key]


def load_manifest(path) -> SequenceInputs:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    doc = read_json(path)
    if doc.get("format") != MANIFEST_FORMAT:
        raise DataError(f"{path}: not a sequence manifest")
    root = path.parent
    si = SequenceInputs(
        root=root,
        manifest=doc,
        template_path=root / doc["template"],
        weights_path=root / doc["weights"],
        poses_path=root / doc["poses"],
        boundary_template_path=root / doc["boundary_template"],
    )
    for p in (si.template_path, si.weights_path, si.poses_path, si.boundary_template_path):
        if not p.exists():
            raise DataError(f"manifest references missing file: {p}")
    for fr in si.frames:
        for key in ("scan", "boundary_scan"):
            if key in fr and not (root / fr[key]).exists():
                raise DataError(f"manifest references missing file: {root / fr[key]}")
    return si


def _register_one(args):
    (tpl_path, weights_path, poses_path, bt_path, scan_path, bscan_path,
     frame_index, out_path, config_dict, init_transforms) = args
    template = load_obj(tpl_path)
    weights = load_skin_weights(weights_path)
    skeleton, poses, _ = load_pose_sequence(poses_path)
    bt = load_boundary_indices(bt_path)
    config = RegistrationConfig.from_dict(config_dict)
    scan = with_computed_normals(load_obj(scan_path))
    boundaries = BoundarySets(bt, load_point_cloud(bscan_path))
    graph = build_graph(template.vertices, config.grid_spacing)
    init = graph_from_skinning(graph, template, weights, skeleton, poses[frame_index])
    if init_transforms is not None:
        init.affines, init.translations = init_transforms
    result = register(template, scan, boundaries, config, init=init)
    save_obj(result.mesh, out_path)
    row = [frame_index, result.energy, result.terms["data"], result.terms["bound"],
           result.iterations, int(result.converged)]
    return row, (result.graph.affines, result.graph.translations)


def run_register(manifest_path, outdir, config: RegistrationConfig,
                 jobs: int = 1, sequential: bool = False):
    """Register every frame; emits registered OBJs, a report, and a manifest."""
    si = load_manifest(manifest_path)
    outdir = Path(outdir)
    (outdir / "registered").mkdir(parents=True, exist_ok=True)
    if sequential and jobs != 1:
        raise ConfigError("sequential initialization requires --jobs 1")
    config_dict = {f: getattr(config, f) for f in config.__dataclass_fields__}
    tasks = []
    for fr in si.frames:
        out_path = outdir / "registered" / f"reg_{fr['index']:06d}.obj"
        tasks.append(
            (si.template_path, si.weights_path, si.poses_path, si.boundary_template_path,
             si.frame_path(fr, "scan"), si.frame_path(fr, "boundary_scan"),
             fr["index"], out_path, config_dict, None)
        )
    rows = []
    if jobs == 1:
        prev = None
        for t in tasks:
            t = t[:-1] + ((prev if sequential else None),)
            row, prev = _register_one(t)
            rows.append(row)
    else:
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            for row, _ in pool.map(_register_one, tasks):
                rows.append(row)
    rows.sort(key=lambda r: r[0])
    write_report(
        outdir / "register_report.txt",
        ["frame", "energy", "data_term", "bound_term", "iterations", "converged"],
        rows,
        {"frames": len(rows), "mean_energy": float(np.mean([r[1] for r in rows]))},
    )
    out_doc = dict(si.manifest)
    out_doc["frames"] = [
        dict(fr, registered=f"registered/reg_{fr['index']:06d}.obj") for fr in si.frames
    ]
    _relink_inputs(out_doc, si, outdir)
    write_json(outdir / "manifest.json", out_doc)
    return outdir / "manifest.json"


def _relink_inputs(doc, si: SequenceInputs, outdir: Path):
    """Keep sequence-level inputs reachable from the new manifest location."""
    import os

    for key, path in (
        ("template", si.template_path),
        ("weights", si.weights_path),
        ("poses", si.poses_path),
        ("boundary_template", si.boundary_template_path),
    ):
        doc[key] = os.path.relpath(path, outdir)
    for fr in doc["frames"]:
        for key in ("scan", "boundary_scan", "ground_truth"):
            if key in fr:
                fr[key] = os.path.relpath(si.root / fr[key], outdir)


def run_fit_subspace(manifest_path, k: int, model_out, coeffs_out=None, report_out=None,
                     mesh_key: str = "registered"):
    """Unskin every frame's mesh, fit the subspace, emit model + coefficients."""
    si = load_manifest(manifest_path)
    skeleton, poses, _ = load_pose_sequence(si.poses_path)
    weights = load_skin_weights(si.weights_path)
    frames = []
    ids = []
    for fr in si.frames:
        if mesh_key not in fr:
            raise DataError(f"frame {fr['index']} has no '{mesh_key}' mesh")
        mesh = load_obj(si.frame_path(fr, mesh_key))
        frames.append(unskin(mesh, weights, skeleton, poses[fr["index"]]))
        ids.append(fr["index"])
    model = fit_subspace_model(frames, k)
    save_model(model, model_out)
    coeffs = np.stack([project(model, f) for f in frames], axis=1)  # (k, n)
    if coeffs_out is not None:
        from .io_utils import write_array_container

        write_array_container(
            coeffs_out,
            {"format": "clothkit-coefficients@1", "k": k, "frame_ids": ids},
            {"coefficients": coeffs},
        )
    rows = []
    for j, (f, fid) in enumerate(zip(frames, ids)):
        rec = reconstruct(model, coeffs[:, j])
        err = np.linalg.norm(rec.vertices - f.vertices, axis=1)
        rows.append([fid, float(err.max()), float(np.sqrt((err**2).mean()))])
    if report_out is not None:
        write_report(
            report_out,
            ["frame", "max_error_m", "rms_error_m"],
            rows,
            {"k": k, "frames": len(rows)},
        )
    return model, coeffs, ids


def load_coefficients(path):
    from .io_utils import read_array_container

    header, arrays = read_array_container(path)
    if header.get("format") != "clothkit-coefficients@1":
        raise DataError(f"{path}: not a coefficients file")
    return arrays["coefficients"], list(header["frame_ids"])


def run_regress_fit(manifest_path, model_path, coeffs_path, out_path,
                    joint_mask=None, history: int = 0, export_matrices=None):
    si = load_manifest(manifest_path)
    skeleton, poses, _ = load_pose_sequence(si.poses_path)
    model = load_model(model_path)
    coeffs, frame_ids = load_coefficients(coeffs_path)
    if list(frame_ids) != [fr["index"] for fr in si.frames]:
        raise DataError("coefficient frames do not match the manifest")
    mask = tuple(joint_mask) if joint_mask else tuple(range(skeleton.n_joints))
    layout = ControlLayout(mask, history, model.k if history else 0)
    seq_poses = [poses[i] for i in frame_ids]
    reg = fit_pose_regressor(seq_poses, coeffs, layout)
    save_regressor(reg, out_path)
    if export_matrices is not None:
        theta, fids = build_control_sequence(seq_poses, layout, coeffs)
        np.savez(
            export_matrices,
            theta=theta,
            coefficients=coeffs[:, fids],
            frame_ids=np.asarray(frame_ids)[fids],
            norm_mean=reg.norm_mean,
            norm_scale=reg.norm_scale,
        )
    return reg


def run_regress_eval(manifest_path, regressor_path, coeffs_path, report_out,
                     vertex_count=None):
    si = load_manifest(manifest_path)
    skeleton, poses, _ = load_pose_sequence(si.poses_path)
    reg = load_regressor(regressor_path)
    coeffs, frame_ids = load_coefficients(coeffs_path)
    seq_poses = [poses[i] for i in frame_ids]
    theta, fids = build_control_sequence(seq_poses, reg.layout, coeffs)
    lam = coeffs[:, fids]
    mse = evaluate_mse(reg, theta, lam)
    summary = {"mse_coefficient_space": mse, "frames": theta.shape[1]}
    if vertex_count:
        summary["vertex_rms_m"] = vertex_rms(reg, theta, lam, vertex_count)
    pred = predict(reg, theta)
    rows = [
        [int(np.asarray(frame_ids)[fids][j]), float(((pred[:, j] - lam[:, j]) ** 2).mean())]
        for j in range(theta.shape[1])
    ]
    write_report(report_out, ["frame", "squared_error"], rows, summary)
    return mse


def run_bake(manifest_path, outdir, resolution: int = DEFAULT_RESOLUTION,
             cutoff: float = DEFAULT_HR_CUTOFF, jobs: int = 1, mesh_key: str = "registered"):
    """LR and HR maps for every frame; emits PNG+mask pairs and a maps manifest."""
    si = load_manifest(manifest_path)
    outdir = Path(outdir)
    (outdir / "lr").mkdir(parents=True, exist_ok=True)
    (outdir / "hr").mkdir(exist_ok=True)
    tasks = []
    for fr in si.frames:
        if mesh_key not in fr:
            raise DataError(f"frame {fr['index']} has no '{mesh_key}' mesh")
        tasks.append(
            (si.frame_path(fr, mesh_key), si.frame_path(fr, "scan"), fr["index"],
             outdir, resolution, cutoff)
        )
    rows = []
    if jobs == 1:
        rows = [_bake_one(t) for t in tasks]
    else:
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_bake_one, tasks))
    rows.sort(key=lambda r: r[0])
    write_report(
        outdir / "bake_report.txt",
        ["frame", "lr_defined_fraction", "hr_defined_fraction"],
        rows,
        {"resolution": resolution, "cutoff_m": cutoff},
    )
    maps = {
        "format": "clothkit-maps@1",
        "resolution": resolution,
        "frames": [
            {"index": fr["index"], "lr": f"lr/frame_{fr['index']:06d}.png",
             "hr": f"hr/frame_{fr['index']:06d}.png"}
            for fr in si.frames
        ],
    }
    write_json(outdir / "maps.json", maps)
    return outdir / "maps.json"


def _bake_one(args):
    mesh_path, scan_path, index, outdir, resolution, cutoff = args
    recon = load_obj(mesh_path)
    if recon.vertex_normals is None:
        recon = with_computed_normals(recon)
    scan = load_obj(scan_path)
    lr = bake_lr(recon, resolution)
    hr = bake_hr(scan, recon, resolution, cutoff)
    save_normal_map(lr, outdir / "lr" / f"frame_{index:06d}.png")
    save_normal_map(hr, outdir / "hr" / f"frame_{index:06d}.png")
    return [index, float(lr.defined.mean()), float(hr.defined.mean())]


def load_maps_manifest(path, key: str):
    path = Path(path)
    doc = read_json(path)
    if doc.get("format") != "clothkit-maps@1":
        raise DataError(f"{path}: not a maps manifest")
    out = []
    for fr in doc["frames"]:
        p = path.parent / fr[key]
        if not p.exists():
            raise DataError(f"maps manifest references missing file: {p}")
        out.append(load_normal_map(p))
    return out


def run_eval_temporal(generated_maps, generated_key, target_maps, target_key, report_out):
    gen = load_maps_manifest(generated_maps, generated_key)
    tgt = load_maps_manifest(target_maps, target_key)
    reports = sequence_temporal_loss(gen, tgt)
    rows = [
        [t + 1, r.l_data, r.l_temp, r.l_temp_joint, r.defined_pixels]
        for t, r in enumerate(reports)
    ]
    write_report(
        report_out,
        ["frame", "l_data", "l_temp", "l_temp_joint", "defined_pixels"],
        rows,
        {
            "mean_l_data": float(np.mean([r.l_data for r in reports])),
            "mean_l_temp": float(np.mean([r.l_temp for r in reports])),
        },
    )
    return reports


def run_retarget(model_path, out_path, offsets=None, source_obj=None, target_obj=None):
    from .subspace import retarget_mean

    model = load_model(model_path)
    if offsets is not None:
        from .io_utils import read_array_container

        header, arrays = read_array_container(offsets)
        o = arrays["offsets"].reshape(-1)
    elif source_obj is not None and target_obj is not None:
        src = load_obj(source_obj)
        dst = load_obj(target_obj)
        if not src.same_topology(dst):
            raise DataError("source/target body meshes must share topology")
        o = (dst.vertices - src.vertices).reshape(-1)
    else:
        raise ConfigError("retarget needs --offsets or --source-obj/--target-obj")
    save_model(retarget_mean(model, o), out_path)
