"""clothkit command line: synth | register | fit-subspace | regress | bake |
eval-temporal | retarget.

Every subcommand exits 0 on success; failures print a single line
`error:<category>: message` to stderr and exit 2 (config), 3 (data) or
4 (numerical). Outputs are written atomically and are deterministic
functions of the inputs and seeds.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ClothkitError, ConfigError
from .io_utils import read_json
from .registration import RegistrationConfig


def _add_common(p):
    p.add_argument("--out", required=True, help="output directory or file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clothkit", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic 4D sleeve sequence")
    p.add_argument("--config", help="JSON file with synth settings")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--template-vertices", type=int, default=None)
    _add_common(p)

    p = sub.add_parser("register", help="register the template to every scan frame")
    p.add_argument("--manifest", required=True, help="sequence manifest from synth")
    p.add_argument("--config", help="JSON file mirroring RegistrationConfig")
    p.add_argument("--jobs", type=int, default=1, help="frames processed in parallel")
    p.add_argument(
        "--sequential", action="store_true",
        help="initialize frame i from frame i-1's graph (forces --jobs 1)",
    )
    _add_common(p)

    p = sub.add_parser("fit-subspace", help="fit the blend-shape model to registrations")
    p.add_argument("--manifest", required=True, help="manifest with registered frames")
    p.add_argument("--k", type=int, required=True, help="retained components")
    p.add_argument("--mesh-key", default="registered", help="which per-frame mesh to use")
    _add_common(p)

    p = sub.add_parser("regress", help="fit/evaluate/apply the pose-to-shape regressor")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--fit", action="store_true")
    mode.add_argument("--eval", action="store_true")
    mode.add_argument("--predict", action="store_true")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", help="subspace model file (fit)")
    p.add_argument("--coeffs", help="coefficients file (fit/eval)")
    p.add_argument("--regressor", help="regressor file (eval/predict)")
    p.add_argument("--joint-mask", help="comma-separated joint indices (fit)")
    p.add_argument("--history", type=int, default=0, help="shape history length h (fit)")
    p.add_argument("--export-matrices", help="write control/coefficient matrices (npz)")
    _add_common(p)

    p = sub.add_parser("bake", help="bake LR and HR normal maps per frame")
    p.add_argument("--manifest", required=True, help="manifest with registered frames")
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--cutoff", type=float, default=0.02, help="HR projection cutoff (m)")
    p.add_argument("--mesh-key", default="registered")
    p.add_argument("--jobs", type=int, default=1)
    _add_common(p)

    p = sub.add_parser("eval-temporal", help="data/temporal metrics between map sequences")
    p.add_argument("--generated", required=True, help="maps manifest for generated frames")
    p.add_argument("--generated-key", default="lr")
    p.add_argument("--target", required=True, help="maps manifest for target frames")
    p.add_argument("--target-key", default="hr")
    _add_common(p)

    p = sub.add_parser("retarget", help="replace the model mean by mean + body offsets")
    p.add_argument("--model", required=True)
    p.add_argument("--offsets", help="array container with an 'offsets' vector")
    p.add_argument("--source-obj", help="body mesh the model was built on")
    p.add_argument("--target-obj", help="body mesh to retarget to")
    _add_common(p)
    return ap


def _cmd_synth(args) -> int:
    from pathlib import Path

    from .synth import SynthConfig, generate, write_sequence

    cfg_dict = read_json(args.config) if args.config else {}
    for key, val in (
        ("seed", args.seed),
        ("frames", args.frames),
        ("template_vertices", args.template_vertices),
    ):
        if val is not None:
            cfg_dict[key] = val
    config = SynthConfig.from_dict(cfg_dict)
    result = generate(config)
    manifest = write_sequence(result, Path(args.out))
    print(f"wrote {manifest}")
    return 0


def _cmd_register(args) -> int:
    from .pipeline import run_register

    config = (
        RegistrationConfig.from_json(args.config) if args.config else RegistrationConfig()
    )
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    manifest = run_register(
        args.manifest, args.out, config, jobs=args.jobs, sequential=args.sequential
    )
    print(f"wrote {manifest}")
    return 0


def _cmd_fit_subspace(args) -> int:
    from pathlib import Path

    from .pipeline import run_fit_subspace

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_fit_subspace(
        args.manifest,
        args.k,
        out / "model.ckm",
        coeffs_out=out / "coefficients.ckm",
        report_out=out / "subspace_report.txt",
        mesh_key=args.mesh_key,
    )
    print(f"wrote {out / 'model.ckm'}")
    return 0


def _cmd_regress(args) -> int:
    from pathlib import Path

    from .pipeline import run_regress_eval, run_regress_fit
    from .subspace import load_model

    out = Path(args.out)
    if args.fit:
        if not (args.model and args.coeffs):
            raise ConfigError("regress --fit needs --model and --coeffs")
        mask = None
        if args.joint_mask:
            try:
                mask = [int(x) for x in args.joint_mask.split(",") if x.strip()]
            except ValueError as exc:
                raise ConfigError(f"bad --joint-mask: {exc}") from exc
        out.mkdir(parents=True, exist_ok=True)
        run_regress_fit(
            args.manifest, args.model, args.coeffs, out / "regressor.ckm",
            joint_mask=mask, history=args.history,
            export_matrices=(args.export_matrices or None),
        )
        print(f"wrote {out / 'regressor.ckm'}")
    elif args.eval:
        if not (args.regressor and args.coeffs):
            raise ConfigError("regress --eval needs --regressor and --coeffs")
        out.mkdir(parents=True, exist_ok=True)
        vcount = load_model(args.model).vertex_count if args.model else None
        mse = run_regress_eval(
            args.manifest, args.regressor, args.coeffs, out / "regress_report.txt",
            vertex_count=vcount,
        )
        print(f"mse {mse:.6g}")
    else:
        if not args.regressor:
            raise ConfigError("regress --predict needs --regressor")
        _predict_to_file(args)
    return 0


def _predict_to_file(args):
    from pathlib import Path

    import numpy as np

    from .io_utils import write_array_container
    from .pipeline import load_manifest
    from .regression import build_control_sequence, load_regressor, predict
    from .skinning import load_pose_sequence

    si = load_manifest(args.manifest)
    _, poses, _ = load_pose_sequence(si.poses_path)
    reg = load_regressor(args.regressor)
    coeffs = None
    if args.coeffs:
        from .pipeline import load_coefficients

        coeffs, _ = load_coefficients(args.coeffs)
    theta, fids = build_control_sequence(poses, reg.layout, coeffs)
    lam = predict(reg, theta)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_array_container(
        out,
        {"format": "clothkit-coefficients@1", "k": lam.shape[0],
         "frame_ids": [int(i) for i in fids]},
        {"coefficients": np.asarray(lam)},
    )
    print(f"wrote {out}")


def _cmd_bake(args) -> int:
    from .pipeline import run_bake

    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    maps = run_bake(
        args.manifest, args.out, resolution=args.resolution, cutoff=args.cutoff,
        jobs=args.jobs, mesh_key=args.mesh_key,
    )
    print(f"wrote {maps}")
    return 0


def _cmd_eval_temporal(args) -> int:
    from pathlib import Path

    from .pipeline import run_eval_temporal

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_eval_temporal(
        args.generated, args.generated_key, args.target, args.target_key,
        out / "temporal_report.txt",
    )
    print(f"wrote {out / 'temporal_report.txt'}")
    return 0


def _cmd_retarget(args) -> int:
    from .pipeline import run_retarget

    run_retarget(
        args.model, args.out, offsets=args.offsets,
        source_obj=args.source_obj, target_obj=args.target_obj,
    )
    print(f"wrote {args.out}")
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "register": _cmd_register,
    "fit-subspace": _cmd_fit_subspace,
    "regress": _cmd_regress,
    "bake": _cmd_bake,
    "eval-temporal": _cmd_eval_temporal,
    "retarget": _cmd_retarget,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ClothkitError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error:data: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
