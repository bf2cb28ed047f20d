"""Command-line front end.

Exit codes: 0 success, 1 internal error, 2 invalid input or configuration,
3 negative numerical verdict (diverged or stalled iteration, failed check).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .io import OUTPUT_ENV, output_root, save_snapshot, save_state, write_csv, write_json, write_kernel_samples

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# shared helpers


def make_flow(cfg: ExperimentConfig):
    """The :class:`~wl3lab.flows.TestFlow` selected by ``cfg['flow']``."""
    from . import flows

    f = cfg["flow"]
    name = f["name"]
    if name == "zero":
        return flows.serrin_flow(g="0", h="x1*x2")
    if name == "serrin":
        amp = f.get("amplitude", 1.0)
        if "epsilon" in f:
            base = flows.serrin_flow(g=f.get("g", "t"), h=f.get("h", "x1*x2"))
            from .picard import flow_epsilon

            u1, _ = base.sample(cfg.grid, cfg.time)
            e1 = flow_epsilon(u1, cfg["norms"]["radius"])
            if e1 == 0:
                raise ConfigError("flow has zero norm and cannot be scaled", "$.flow.epsilon")
            amp = f["epsilon"] / e1
        return flows.serrin_flow(g=f"({float(amp)!r})*({f.get('g', 't')})", h=f.get("h", "x1*x2"))
    if name == "landau":
        return flows.landau_flow(f.get("a", 2.0))
    if name == "rotating":
        return flows.rotating_counterexample()
    if name == "random":
        raise ConfigError("the random flow has no closed form; use 'flows sample'", "$.flow.name")
    raise ConfigError(f"unknown flow {name!r}", "$.flow.name")


def sample_flow(cfg: ExperimentConfig):
    from .flows import random_solenoidal
    from .grid import SpaceTimeField

    if cfg["flow"]["name"] == "random":
        w = random_solenoidal(cfg.grid, seed=cfg["seed"], amplitude=cfg["flow"].get("amplitude", 1.0)).values
        tg = cfg.time
        return SpaceTimeField(tg, cfg.grid, tg.nodes[:, None, None, None, None] * w[None]), None
    return make_flow(cfg).sample(cfg.grid, cfg.time)


def _outdir(cfg: ExperimentConfig | None, args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if cfg is not None and "output_dir" in cfg.data:
        return Path(cfg["output_dir"])
    return output_root()


def _report(command: str, cfg: ExperimentConfig | None, verdict: str, metrics: dict, t0: float, extra=None) -> dict:
    rep = {
        "command": command,
        "version": __version__,
        "config_hash": cfg.hash if cfg is not None else None,
        "seed": cfg["seed"] if cfg is not None else None,
        "verdict": verdict,
        "metrics": metrics,
        "timings": {"wall_seconds": time.perf_counter() - t0},
    }
    if cfg is not None:
        rep["config"] = cfg.data
    if extra:
        rep.update(extra)
    return rep


def _emit(rep: dict, outdir: Path, stem: str) -> Path:
    tag = (rep["config_hash"] or "noconfig")[:12]
    path = write_json(outdir / f"{stem}_{tag}.json", rep)
    print(json.dumps({"verdict": rep["verdict"], "report": str(path), **_short(rep["metrics"])}))
    return path


def _short(metrics: dict) -> dict:
    return {k: v for k, v in metrics.items() if not isinstance(v, (list, dict))}


def _cfg(args) -> ExperimentConfig:
    cfg = load_config(getattr(args, "config", None))
    return cfg.with_overrides(args.seed, args.grid_n, args.time_steps)


# ---------------------------------------------------------------------------
# commands


def cmd_norms(args) -> int:
    from .grid import ball_mask
    from .lorentz import lp_norm, mixed_norm

    t0 = time.perf_counter()
    cfg = _cfg(args)
    u, p = sample_flow(cfg)
    R, m = cfg["norms"]["radius"], cfg["norms"]["m"]
    mask = ball_mask(cfg.grid, R)
    eps = mixed_norm(u, mask, s=np.inf, q=3.0, r=np.inf)
    metrics = {"radius": R, "epsilon": eps.value, "epsilon_frames": list(map(float, eps.frame_values))}
    if p is not None:
        cv = cfg.grid.cell_volume
        per = np.array([lp_norm(p.values[j], mask, 1.0, cv) for j in range(p.nframes)])
        pm = float(np.sum(cfg.time.trapezoid_weights() * per**m) ** (1 / m))
        metrics.update({"m": m, "pressure_Lm_L1": pm, "C_star": eps.value + pm})
    rep = _report("norms", cfg, "pass", metrics, t0)
    _emit(rep, _outdir(cfg, args), "norms")
    return EXIT_OK


def cmd_localize(args) -> int:
    from .localization import forcing_support_audit, localize

    t0 = time.perf_counter()
    cfg = _cfg(args)
    u, p = sample_flow(cfg)
    st = localize(u, p)
    audit = forcing_support_audit(st, radius=1.5, m=cfg["norms"]["m"])
    g = cfg.grid
    k = g.derivative_wavenumbers
    div = [float(np.abs(g.ifft(sum(1j * k[i] * g.fft(st.u_tilde.values[j][i]) for i in range(3)))).max()) for j in range(st.u_tilde.nframes)]
    early = st.time.nodes < st.cutoffs.theta.t_off
    metrics = {
        "source_relative_mean": st.source_mean,
        "max_div_u_tilde": max(div),
        "u_tilde_zero_before_switch_on": bool(np.all(st.u_tilde.values[early] == 0.0)),
        "support_audit_ok": audit.ok,
        "support_max_outside": audit.max_outside,
        "f0_norm": audit.norms,
    }
    out = _outdir(cfg, args)
    if args.save:
        save_state(st, out, f"localized_{cfg.hash[:12]}")
    verdict = "pass" if audit.ok and metrics["u_tilde_zero_before_switch_on"] else "fail"
    rep = _report("localize", cfg, verdict, metrics, t0)
    _emit(rep, out, "localize")
    return EXIT_OK if verdict == "pass" else EXIT_NUMERICAL


def cmd_picard_run(args) -> int:
    from .picard import PicardConfig, PicardTrace, flow_epsilon, solve_fixed_point

    t0 = time.perf_counter()
    cfg = _cfg(args)
    u, p = sample_flow(cfg)
    if p is None:
        raise ConfigError("the Picard run needs a flow with a pressure", "$.flow.name")
    pc = PicardConfig(**cfg["picard"])
    _, trace, _ = solve_fixed_point(u, p, pc)
    out = _outdir(cfg, args)
    csv_path = write_csv(out / f"picard_trace_{cfg.hash[:12]}.csv", PicardTrace.HEADER, trace.rows())
    metrics = {"epsilon": flow_epsilon(u, cfg["norms"]["radius"]), **trace.record(), "geometric_decay_ok": trace.geometric_decay_ok()}
    rep = _report("picard run", cfg, trace.verdict, metrics, t0, {"trace_csv": str(csv_path)})
    _emit(rep, out, "picard")
    return EXIT_OK if trace.verdict == "converged" else EXIT_NUMERICAL


def cmd_picard_scan(args) -> int:
    from .flows import serrin_flow
    from .picard import PicardConfig, contraction_threshold_scan

    t0 = time.perf_counter()
    cfg = _cfg(args)
    f = cfg["flow"]
    if f["name"] != "serrin":
        raise ConfigError("the amplitude scan runs on the Serrin family", "$.flow.name")
    g, h = f.get("g", "t"), f.get("h", "x1*x2")
    family = lambda a: serrin_flow(g=f"({float(a)!r})*({g})", h=h).sample(cfg.grid, cfg.time)
    sc = cfg["scan"]
    pc = cfg["picard"]
    rep_scan = contraction_threshold_scan(
        family,
        sc["amplitudes"],
        PicardConfig(max_iters=sc["max_iters"], metric=pc["metric"], delta=pc["delta"]),
        bisection_steps=sc["bisection_steps"],
    )
    rec = rep_scan.record()
    out = _outdir(cfg, args)
    write_csv(out / f"scan_{cfg.hash[:12]}.csv", ["amplitude", "epsilon", "max_ratio"], zip(rec["amplitudes"], rec["epsilons"], rec["max_ratios"]))
    verdict = "pass" if rep_scan.monotone else "fail"
    rep = _report("picard scan", cfg, verdict, rec, t0)
    _emit(rep, out, "scan")
    return EXIT_OK if verdict == "pass" else EXIT_NUMERICAL


def cmd_ledger(args) -> int:
    from . import exponents as ex

    t0 = time.perf_counter()
    if args.which == "bootstrap":
        led = ex.bootstrap_schedule(args.q, args.s)
    elif args.which == "mcond":
        led = ex.pressure_m_condition(args.q, args.m)
    elif args.which == "source":
        led = ex.source_exponent_conditions(args.q, args.s, args.m, args.delta)
    else:
        cls, value = ex.serrin_classify(args.q, args.s)
        led = ex.ExponentLedger("classify", {"q": ex.ext(args.q), "s": ex.ext(args.s)}, {"class": cls, "value": value})
    print(led.table())
    rep = _report(f"ledger {args.which}", None, "pass" if led.ok else "fail", led.as_dict(), t0)
    rep["timings"] = {}  # exact results: keep reports byte-identical across runs
    out = _outdir(None, args)
    stem = "ledger_" + args.which + "_" + "_".join(str(v).replace("/", "o") for v in led.inputs.values())
    write_json(out / f"{stem}.json", rep)
    return EXIT_OK if led.ok else EXIT_NUMERICAL


def cmd_kernel_check(args) -> int:
    from . import kernels as K

    t0 = time.perf_counter()
    cfg = _cfg(args)
    rng = np.random.default_rng(cfg["seed"])
    samples, errs = [], []
    for _ in range(args.points):
        x = rng.uniform(-3, 3, 3)
        t = float(10 ** rng.uniform(-1, 0.5))
        a = K.oseen_sample(x, t, "closed_form")
        b = K.oseen_sample(x, t, "quadrature_oracle")
        samples += [a, b]
        errs.append(float(np.abs(a.value - b.value).max() / np.abs(b.value).max()))
    out = _outdir(cfg, args)
    csv_path = write_kernel_samples(out / f"kernel_samples_{cfg.hash[:12]}.csv", samples)
    tol = 1e-6
    metrics = {"n_points": args.points, "max_relative_error": max(errs), "tolerance": tol}
    verdict = "pass" if max(errs) <= tol else "fail"
    rep = _report("kernel check", cfg, verdict, metrics, t0, {"samples_csv": str(csv_path)})
    _emit(rep, out, "kernel")
    return EXIT_OK if verdict == "pass" else EXIT_NUMERICAL


def cmd_flows_sample(args) -> int:
    t0 = time.perf_counter()
    cfg = _cfg(args)
    u, p = sample_flow(cfg)
    out = _outdir(cfg, args)
    tag = cfg.hash[:12]
    files = [str(x) for x in save_snapshot(u, out, f"u_{tag}")]
    if p is not None:
        files += [str(x) for x in save_snapshot(p, out, f"p_{tag}")]
    rep = _report("flows sample", cfg, "pass", {"frames": u.nframes, "files": files}, t0)
    _emit(rep, out, "flows")
    return EXIT_OK


def cmd_residual_check(args) -> int:
    from .flows import default_battery, very_weak_residual, weak_residual

    t0 = time.perf_counter()
    cfg = _cfg(args)
    flow = make_flow(cfg)
    rc = cfg["residual"]
    if flow.properties.get("stationary"):
        raise ConfigError("stationary singular flows are checked by the pointwise residual in the test suite", "$.flow.name")
    if flow.pressure is None or rc["solenoidal"]:
        rep_r = very_weak_residual(flow, default_battery(True), n=rc["n_space"], m=rc["n_time"], tol=rc["tol"])
    else:
        rep_r = weak_residual(flow, default_battery(False), n=rc["n_space"], m=rc["n_time"], tol=rc["tol"])
    metrics = {"flow": rep_r.flow, "battery": rep_r.battery_id, "max_residual": rep_r.max_residual, "tol": rc["tol"], "residuals": rep_r.residuals.tolist()}
    rep = _report("residual check", cfg, rep_r.verdict, metrics, t0)
    _emit(rep, _outdir(cfg, args), "residual")
    return EXIT_OK if rep_r.verdict == "pass" else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON experiment file")
    common.add_argument("--seed", type=int)
    common.add_argument("--grid-n", type=int)
    common.add_argument("--time-steps", type=int)
    common.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or ./results)")

    p = argparse.ArgumentParser(prog="wl3lab", description="Numerical experiments for local regularity of Navier-Stokes flows.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", required=True)

    sub.add_parser("norms", parents=[common], help="ε and pressure norms of a flow").set_defaults(func=cmd_norms)
    loc = sub.add_parser("localize", parents=[common], help="cut-off a flow and audit the forcing")
    loc.add_argument("--save", action="store_true", help="write snapshots of the localized state")
    loc.set_defaults(func=cmd_localize)

    pic = sub.add_parser("picard", help="fixed-point iteration").add_subparsers(dest="pcmd", required=True)
    pic.add_parser("run", parents=[common]).set_defaults(func=cmd_picard_run)
    pic.add_parser("scan", parents=[common]).set_defaults(func=cmd_picard_scan)

    led = sub.add_parser("ledger", help="exact exponent ledgers")
    led.add_argument("which", choices=["bootstrap", "mcond", "source", "classify"])
    led.add_argument("--q", required=True)
    led.add_argument("--s")
    led.add_argument("--m")
    led.add_argument("--delta", default="0")
    led.add_argument("--out")
    led.set_defaults(func=cmd_ledger)

    ker = sub.add_parser("kernel", help="kernel checks").add_subparsers(dest="kcmd", required=True)
    kc = ker.add_parser("check", parents=[common])
    kc.add_argument("--points", type=int, default=20)
    kc.set_defaults(func=cmd_kernel_check)

    fl = sub.add_parser("flows", help="test flows").add_subparsers(dest="fcmd", required=True)
    fl.add_parser("sample", parents=[common]).set_defaults(func=cmd_flows_sample)

    rs = sub.add_parser("residual", help="weak-form residuals").add_subparsers(dest="rcmd", required=True)
    rs.add_parser("check", parents=[common]).set_defaults(func=cmd_residual_check)
    return p


def _ledger_args_ok(args) -> None:
    if args.cmd != "ledger":
        return
    need = {"bootstrap": ["s"], "mcond": [], "source": ["s", "m"], "classify": ["s"]}[args.which]
    missing = [f"--{n}" for n in need if getattr(args, n) is None]
    if missing:
        raise ConfigError(f"missing {' '.join(missing)}", f"ledger {args.which}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    for name in ("seed", "grid_n", "time_steps"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        _ledger_args_ok(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception:  # pragma: no cover - last resort
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
