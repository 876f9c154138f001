"""Command-line entry point: ``anchorfit <subcommand> ...``.

Exit codes: 0 success, 1 validation or usage error, 2 divergence or a
gradient check above tolerance.
"""

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import gradients
from .body_model import posed_vertices
from .camera import transform_object
from .contact import contacts_from_composition
from .errors import AnchorFitError, DivergedError, SchemaError
from .formats import (
    ContactConfig,
    RunConfig,
    load_cameras,
    load_config,
    load_contacts,
    load_keypoints,
    load_mesh,
    load_params,
    load_rig,
    save_cameras,
    save_config,
    save_contacts,
    save_evaluation,
    save_evaluation_csv,
    save_fit_metrics,
    save_keypoints,
    save_mesh,
    save_obj,
    save_params,
    save_rig,
    save_trace_csv,
)
from .optimize import fit_motion, fit_static
from .synthetic import SCENARIOS, evaluate, generate, random_configuration, scenario

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
THREADS_ENV = "ANCHORFIT_THREADS"

# unfrozen entries checked per random configuration, by block
CHECK_BLOCKS = ("human_root_rot", "human_root_trans", "human_joint_rots", "object_rot", "object_trans")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# --- helpers ----------------------------------------------------------------------


def _output_dir(cfg):
    out = cfg.path("output_dir")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_fit_outputs(out, model, humans, objects, trace, with_obj):
    save_params(out / "params.json", humans, objects)
    save_fit_metrics(out / "metrics.json", trace)
    save_trace_csv(out / "metrics.csv", trace)
    if with_obj:
        for f, h in enumerate(humans):
            save_obj(out / f"human_{f:04d}.obj", posed_vertices(model, h), model.faces)
            if objects is not None:
                save_obj(out / f"object_{f:04d}.obj", transform_object(objects[f]), objects[f].mesh.faces)


def _summary(stage, trace, out):
    return f"{stage}: final loss {trace.final.total:.6g} ({trace.reason}, {len(trace)} iterations) -> {out}"


def _object_pose(path, mesh, doc_name):
    _, objects = load_params(path, mesh)
    if objects is None:
        raise SchemaError(doc_name, "frames[0].object", "no object pose in this parameter file")
    return objects[0]


# --- subcommands ------------------------------------------------------------------------


def cmd_fit_static(args):
    cfg = load_config(args.config)
    model = load_rig(cfg.path("rig"))
    cameras = load_cameras(cfg.path("cameras"))
    frames = load_keypoints(cfg.path("keypoints"))
    if len(frames) != 1:
        raise SchemaError(cfg.path("keypoints"), "frames", "the static stage expects exactly one frame")
    init = None
    if cfg.path("init") is not None:
        init = load_params(cfg.path("init"))[0][0]
    human, trace = fit_static(model, cameras, frames[0], init, cfg.weights, cfg.adam)
    out = _output_dir(cfg)
    _write_fit_outputs(out, model, [human], None, trace, args.obj)
    print(_summary("fit-static", trace, out / "params.json"))
    return EXIT_OK


def cmd_fit_motion(args):
    cfg = load_config(args.config)
    model = load_rig(cfg.path("rig"))
    cameras = load_cameras(cfg.path("cameras"))
    frames = load_keypoints(cfg.path("keypoints"))
    contacts = load_contacts(cfg.path("contacts"))
    mesh = load_mesh(cfg.path("mesh"))
    humans, objects = load_params(cfg.path("init"), mesh)
    static_human = humans[0]
    if cfg.path("object_pose") is not None:
        static_object = _object_pose(cfg.path("object_pose"), mesh, cfg.path("object_pose"))
    elif objects is not None:
        static_object = objects[0]
    else:
        raise SchemaError(args.config, "paths.object_pose", "needed when the init file has no object pose")
    humans, objects, trace = fit_motion(model, cameras, frames, contacts, static_human, static_object,
                                        cfg.weights, cfg.adam, cfg.contact.n_samples, cfg.contact.seed_index)
    out = _output_dir(cfg)
    _write_fit_outputs(out, model, humans, objects, trace, args.obj)
    print(_summary("fit-motion", trace, out / "params.json"))
    return EXIT_OK


def cmd_extract_contacts(args):
    cfg = load_config(args.config)
    model = load_rig(cfg.path("rig"))
    mesh = load_mesh(cfg.path("mesh"))
    humans, objects = load_params(cfg.path("init"), mesh)
    if objects is None:
        raise SchemaError(cfg.path("init"), "frames[0].object", "the composition needs an object pose")
    gm = cfg.weights.gm_sigma_dist or None
    c = cfg.contact
    contacts, diag = contacts_from_composition(model, humans[0], objects[0], c.n_samples, c.seed_index, c.tau_n,
                                               c.tau_d, gm, c.convention, return_diagnostics=True)
    out = _output_dir(cfg)
    save_contacts(out / "contacts.json", contacts, diag)
    note = " (warning: no pairs passed both gates)" if contacts.empty_warning else ""
    print(f"extract-contacts: {len(contacts)} pairs{note} -> {out / 'contacts.json'}")
    return EXIT_OK


def cmd_synth(args):
    sc = scenario(args.scenario, args.frames, args.noise, args.occlusion, args.seed)
    data = generate(sc, args.n_samples, args.seed_index, args.tau_n, args.tau_d)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_rig(out / "rig.json", sc.model)
    save_cameras(out / "static_cameras.json", sc.static_views)
    save_keypoints(out / "static_keypoints.json", [data.static_keypoints])
    save_cameras(out / "cameras.json", sc.views)
    save_keypoints(out / "keypoints.json", data.keypoints)
    save_mesh(out / "mesh.json", sc.mesh)
    save_contacts(out / "contacts.json", data.contacts)
    save_params(out / "truth.json", data.humans, data.objects)
    save_params(out / "object_pose.json", data.humans[:1], data.objects[:1])

    contact = {"n_samples": args.n_samples, "tau_n": args.tau_n, "tau_d": args.tau_d, "seed_index": args.seed_index}
    cc = ContactConfig(**contact)
    configs = {
        "fit_static.json": RunConfig("fit-static", {"rig": "rig.json", "cameras": "static_cameras.json",
                                                    "keypoints": "static_keypoints.json", "output_dir": "static"},
                                     contact=cc),
        "fit_motion.json": RunConfig("fit-motion", {"rig": "rig.json", "cameras": "cameras.json",
                                                    "keypoints": "keypoints.json", "contacts": "contacts.json",
                                                    "mesh": "mesh.json", "init": "static/params.json",
                                                    "object_pose": "object_pose.json", "output_dir": "motion"},
                                     contact=cc),
        "extract_contacts.json": RunConfig("extract-contacts", {"rig": "rig.json", "mesh": "mesh.json",
                                                                "init": "object_pose.json",
                                                                "output_dir": "extracted"}, contact=cc),
        "eval.json": RunConfig("eval", {"rig": "rig.json", "truth": "truth.json", "recovered": "motion/params.json",
                                        "cameras": "cameras.json", "contacts": "contacts.json", "mesh": "mesh.json",
                                        "output_dir": "eval"}, contact=cc),
    }
    for name, cfg in configs.items():
        save_config(out / name, cfg)
    print(f"synth: {sc.name}, {sc.frames} frames, {len(data.contacts)} contact pairs -> {out}")
    return EXIT_OK


def cmd_eval(args):
    cfg = load_config(args.config)
    model = load_rig(cfg.path("rig"))
    mesh = load_mesh(cfg.path("mesh")) if cfg.path("mesh") is not None else None
    truth_h, truth_o = load_params(cfg.path("truth"), mesh)
    rec_h, rec_o = load_params(cfg.path("recovered"), mesh)
    if mesh is None:
        truth_o = rec_o = None
    cameras = load_cameras(cfg.path("cameras")) if cfg.path("cameras") is not None else ()
    contacts = load_contacts(cfg.path("contacts")) if cfg.path("contacts") is not None else None
    metrics = evaluate(rec_h, truth_h, model, contacts, tuple(cameras), rec_o, truth_o)
    out = _output_dir(cfg)
    save_evaluation(out / "metrics.json", metrics, model.height)
    save_evaluation_csv(out / "metrics.csv", metrics)
    m = metrics["mean"]
    print(f"eval: joint error {m['joint_error']:.6g}, reprojection {m['reprojection_error']:.6g}, "
          f"contact {m['contact_distance']:.6g}, penetration {m['penetration_fraction']:.6g} -> {out}")
    return EXIT_OK


def sample_entries(vector, per_config, rng):
    """Unfrozen entries to check, spread over the parameter blocks.

    Each block present gets an equal share (joint rotations take the
    remainder); entries within a block are drawn without replacement.
    """
    off = vector.offsets()
    pools = {b: [] for b in CHECK_BLOCKS}
    for (f, b), (pos, n) in off.items():
        if b in pools:
            pools[b].extend(i for i in range(pos, pos + n) if not vector.frozen[i])
    present = [b for b in CHECK_BLOCKS if pools[b]]
    share = max(1, per_config // (2 * len(present)))
    picks = []
    for b in present:
        want = share if b != "human_joint_rots" else max(share, per_config - share * (len(present) - 1))
        pool = np.array(pools[b])
        picks.append(rng.choice(pool, size=min(want, len(pool)), replace=False))
    return np.sort(np.concatenate(picks))


def run_check_grad(configs=100, frames=30, n_samples=256, entries=48, h=1e-5, seed=0, log=None):
    """Finite-difference check over seeded random objectives; returns per-config reports."""
    rng = np.random.default_rng(seed)
    reports = []
    for c in range(configs):
        vec, scene, weights = random_configuration(seed * 100003 + c, frames, n_samples)
        idx = sample_entries(vec, entries, rng)
        rep = gradients.finite_difference_check(vec, scene, weights, h=h, entries=idx,
                                                gradient=gradients.grad_total(vec, scene, weights))
        reports.append(rep)
        if log is not None:
            log(f"config {c}: {rep.checked} entries, max rel {rep.max_rel_error:.3e} at {rep.worst_entry}")
    return reports


def cmd_check_grad(args):
    started = time.perf_counter()
    log = print if args.verbose else None
    reports = run_check_grad(args.configs, args.frames, args.samples, args.entries, args.h, args.seed, log)
    worst = max(range(len(reports)), key=lambda i: reports[i].max_rel_error)
    w = reports[worst]
    small = max(r.max_small_abs_error for r in reports)
    ok = all(r.passed(args.tol, args.abs_tol) for r in reports)
    elapsed = time.perf_counter() - started
    if args.out:
        lines = ["config,entry,analytic,numeric,abs_err,rel_err"]
        for c, rep in enumerate(reports):
            for name, a, n, ae, re_ in rep.entries:
                lines.append(f"{c},{name},{a!r},{n!r},{ae!r},{re_!r}")
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    status = "PASS" if ok else "FAIL"
    print(f"check-grad: {status} max relative error {w.max_rel_error:.3e} (config {worst}, {w.worst_entry}) "
          f"max absolute error {small:.3e} on entries below 1e-8, "
          f"over {sum(r.checked for r in reports)} entries in {len(reports)} configurations, "
          f"tolerances {args.tol:g} / {args.abs_tol:g}, {elapsed:.1f} s")
    return EXIT_OK if ok else EXIT_FAILED


# --- argument parsing ---------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="anchorfit", description="Fit an articulated body and a rigid object to keypoints.")
    det = p.add_mutually_exclusive_group()
    det.add_argument("--deterministic", dest="deterministic", action="store_true", default=True,
                     help="single-threaded BLAS for fixed-order reductions (default)")
    det.add_argument("--no-deterministic", dest="deterministic", action="store_false",
                     help=f"allow multi-threaded BLAS, capped by {THREADS_ENV}")
    sub = p.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    sub.required = True

    for name, fn, text in (("fit-static", cmd_fit_static, "multi-view static fit"),
                           ("fit-motion", cmd_fit_motion, "single/multi-view motion tracking")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True, help="run configuration file")
        s.add_argument("--obj", action="store_true", help="also write posed OBJ meshes per frame")
        s.set_defaults(func=fn)

    s = sub.add_parser("extract-contacts", help="contact pairs from a static composition")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_extract_contacts)

    s = sub.add_parser("synth", help="write a synthetic scenario and ready-to-run configs")
    s.add_argument("--scenario", required=True, choices=SCENARIOS)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--frames", type=int, default=30)
    s.add_argument("--noise", type=float, default=0.005, help="keypoint noise sigma (normalized units)")
    s.add_argument("--occlusion", type=float, default=0.0, help="per-keypoint drop probability")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-samples", type=int, default=256)
    s.add_argument("--seed-index", type=int, default=0)
    s.add_argument("--tau-n", type=float, default=0.3)
    s.add_argument("--tau-d", type=float, default=0.25)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("eval", help="metrics of a recovered sequence against ground truth")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("check-grad", help="finite-difference check of the objective gradient")
    s.add_argument("--configs", type=int, default=100)
    s.add_argument("--frames", type=int, default=30)
    s.add_argument("--samples", type=int, default=256)
    s.add_argument("--entries", type=int, default=48, help="entries checked per configuration")
    s.add_argument("--h", type=float, default=1e-5, help="central-difference step")
    s.add_argument("--tol", type=float, default=1e-4, help="relative tolerance")
    s.add_argument("--abs-tol", type=float, default=1e-7,
                   help="absolute tolerance for entries whose numeric derivative is below 1e-8")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="optional CSV of every checked entry")
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_check_grad)
    return p


def thread_limit(deterministic, env=None):
    """BLAS thread cap: 1 when deterministic, else the env value (0 = no cap)."""
    env = os.environ if env is None else env
    raw = env.get(THREADS_ENV, "0")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a non-negative integer, got {raw!r}") from None
    if n < 0:
        raise UsageError(f"{THREADS_ENV} must be a non-negative integer, got {raw!r}")
    if deterministic:
        return 1
    return n or None


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        limit = thread_limit(args.deterministic)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_INVALID
    try:
        with threadpool_limits(limits=limit):
            return args.func(args)
    except DivergedError as exc:
        print(f"{args.command}: diverged: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (AnchorFitError, OSError) as exc:
        print(f"{args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
