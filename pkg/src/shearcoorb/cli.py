"""Command-line front end.

Every command prints one verdict line ``PASS|FAIL|REPORT key=value ...`` on
stdout and exits with 0 (PASS or REPORT), 1 (FAIL) or 2 (configuration or
input error, reported as an ``ERROR`` line on stderr). Output files are
written atomically.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ConfigError, RunConfig, load_config, shipped_config_path

COMMANDS = ("gen-window", "phantom", "analyze", "synthesize", "verify", "kernel-norm", "coorbit-norm")
CHECKS = ("calderon", "parseval", "reproduce", "supports", "smoothness", "identities", "inequalities")

CALDERON_TOL = 1e-3
PARSEVAL_BAND = (0.95, 1.05)
REPRODUCE_TOL = 0.05
LEAK_TOL = 1e-14
STABILITY_TOL = 0.01


class InputError(ValueError):
    """Missing or inconsistent input file."""


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6g}"
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value).replace(" ", "_")


def verdict_line(status: str, cmd: str, **fields) -> str:
    """``STATUS cmd=... key=value ...`` with stable formatting."""
    parts = [status, f"cmd={cmd}"] + [f"{k}={_fmt(v)}" for k, v in fields.items()]
    return " ".join(parts)


class Verdict:
    def __init__(self, status: str, cmd: str, **fields):
        if status not in ("PASS", "FAIL", "REPORT"):
            raise ValueError(status)
        self.status = status
        self.line = verdict_line(status, cmd, **fields)

    @property
    def exit_code(self) -> int:
        return 1 if self.status == "FAIL" else 0


# ------------------------------------------------------------ helpers

def _pair(cfg: RunConfig):
    """Normalized window pair for the config, cached under ``SHEARCOORB_CACHE``."""
    from .windows import default_pair, read_pair, write_pair

    params = cfg.window_params()
    cache = os.environ.get("SHEARCOORB_CACHE")
    if not cache:
        return default_pair(params)
    key = hashlib.sha256(json.dumps(params.to_dict(), sort_keys=True).encode()).hexdigest()[:16]
    path = Path(cache) / f"pair-{key}.json"
    if path.exists():
        try:
            pair = read_pair(path)
            if pair.params == params:
                return pair
        except (ValueError, KeyError, OSError):
            pass
    pair = default_pair(params)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_pair(path, pair)
    return pair


def _tcfg(cfg: RunConfig, workers: int, shear_spacing=None):
    return cfg.transform_config(_pair(cfg), workers, shear_spacing)


def _out(args, cfg: RunConfig, default_name: str) -> Path:
    if args.output:
        return Path(args.output)
    return Path(cfg.section("io")["out_dir"]) / default_name


def _need_input(args) -> Path:
    if not args.input:
        raise InputError("--input is required")
    path = Path(args.input)
    if not path.is_file():
        raise InputError(f"input not found: {path}")
    return path


def _seeds(cfg: RunConfig, args) -> list[int]:
    base = cfg.seed if args.seed is None else args.seed
    return [base + k for k in range(cfg.section("phantom")["count"])]


def _phantoms(cfg: RunConfig, args):
    from .grid import make_phantom

    grid = cfg.grid_spec()
    return [(s, make_phantom(cfg.phantom_spec(s), grid)) for s in _seeds(cfg, args)]


# ------------------------------------------------------------ commands

def cmd_gen_window(cfg: RunConfig, args) -> Verdict:
    from .windows import write_pair

    pair = _pair(cfg)
    path = write_pair(_out(args, cfg, "pair.json"), pair)
    return Verdict("REPORT", "gen-window", c_psi=pair.c_psi, norm_psi=pair.norm_sq("psi"),
                   norm_phi=pair.norm_sq("phi"), output=path)


def cmd_phantom(cfg: RunConfig, args) -> Verdict:
    from .grid import make_phantom, write_volume

    seed = cfg.seed if args.seed is None else args.seed
    f = make_phantom(cfg.phantom_spec(seed), cfg.grid_spec())
    path = write_volume(_out(args, cfg, f"phantom_{seed}.vol"), f)
    return Verdict("REPORT", "phantom", seed=seed, norm=f.norm(), output=path)


def cmd_analyze(cfg: RunConfig, args) -> Verdict:
    from .grid import read_volume
    from .transform import analyze, frame_energy, write_scf

    src = _need_input(args)
    f = read_volume(src)
    tc = _tcfg(cfg, args.workers)
    coeffs = analyze(f, tc)
    path = write_scf(_out(args, cfg, src.stem + ".scf"), coeffs)
    return Verdict("REPORT", "analyze", planes=tc.pgrid.n_planes, stored=len(tc.unique_elements[0]),
                   energy=frame_energy(coeffs), config_hash=tc.config_hash[:16], output=path)


def cmd_synthesize(cfg: RunConfig, args) -> Verdict:
    from .grid import write_volume
    from .transform import read_scf, synthesize

    src = _need_input(args)
    coeffs = read_scf(src)
    tc = _tcfg(cfg, args.workers)
    if coeffs.config_hash != tc.config_hash:
        raise InputError("config hash mismatch between coefficient file and configuration")
    f = synthesize(coeffs, tc)
    path = write_volume(_out(args, cfg, src.stem + "_synth.vol"), f)
    return Verdict("REPORT", "synthesize", norm=f.norm(), output=path)


def cmd_kernel_norm(cfg: RunConfig, args) -> Verdict:
    from .kernel import aq_norm_estimates, write_estimates_csv

    pair = _pair(cfg)
    k = cfg.section("kernel")
    r_values = cfg.section("weights")["r"]
    estimates = []
    ok = True
    fields = {}
    for q in k["q"]:
        blocks = ["inf-inf"] if q == 1 else None
        ests = aq_norm_estimates(pair, q, r_values, k["rho_schedule"], blocks=blocks, workers=args.workers)
        estimates.extend(ests)
        tag = f"q{q:g}"
        if q == 1:
            vals = ests[0].blocks["inf-inf"]
            fields[f"{tag}_infinf_last_change"] = ests[0].last_rel_change("inf-inf")
            fields[f"{tag}_infinf_increasing"] = bool(np.all(np.diff(vals) > 0))
            continue
        changes = [e.last_rel_change() for e in ests]
        finals = [e.estimate[-1] for e in ests]
        order = np.argsort(r_values, kind="stable")
        monotone = bool(np.all(np.diff(np.asarray(finals)[order]) >= 0))
        stable = all(c <= STABILITY_TOL for c in changes)
        ok = ok and stable and monotone
        fields[f"{tag}_estimate"] = finals
        fields[f"{tag}_last_change_max"] = max(changes)
        fields[f"{tag}_monotone_r"] = monotone
    path = write_estimates_csv(_out(args, cfg, "kernel_norm.csv"), estimates)
    return Verdict("PASS" if ok else "FAIL", "kernel-norm", **fields, output=path)


def cmd_coorbit_norm(cfg: RunConfig, args) -> Verdict:
    from .coorbit import embedding_report
    from .grid import make_phantom, read_volume

    if args.input:
        f = read_volume(_need_input(args))
    else:
        seed = cfg.seed if args.seed is None else args.seed
        f = make_phantom(cfg.phantom_spec(seed), cfg.grid_spec())
    tc = _tcfg(cfg, args.workers)
    w = cfg.section("weights")
    p_list = [math.inf if p == "inf" else p for p in w["p"]]
    rep = embedding_report(f, tc, p_list, w["r"])
    path = rep.write_csv(_out(args, cfg, "coorbit_norm.csv"))
    status = "PASS" if rep.monotone_in_r else "FAIL"
    return Verdict(status, "coorbit-norm", monotone_r=rep.monotone_in_r, n=rep.norms.size, output=path)


# ------------------------------------------------------------ verify

def verify_calderon(cfg: RunConfig, args) -> Verdict:
    from .windows import calderon_check

    pair = _pair(cfg)
    a1 = pair.params.a1
    t0 = time.perf_counter()
    y = np.geomspace(a1 * 1e-3, 4 * a1, 256)
    rep = calderon_check(pair, y)
    dt = time.perf_counter() - t0
    ok = rep.max_deviation <= CALDERON_TOL
    return Verdict("PASS" if ok else "FAIL", "verify.calderon", max_dev=rep.max_deviation, n=y.size,
                   y_max=4 * a1, seconds=round(dt, 2))


def verify_parseval(cfg: RunConfig, args) -> Verdict:
    from .transform import parseval_ratio

    tc = _tcfg(cfg, args.workers)
    spacing = np.asarray(cfg.section("paramgrid")["shear_spacing"])
    fine = _tcfg(cfg, args.workers, spacing / 2)
    ratios, refined, flags = [], [], []
    for _, f in _phantoms(cfg, args):
        res = parseval_ratio(f, tc)
        ratios.append(res.ratio)
        refined.append(parseval_ratio(f, fine).ratio)
        flags.extend(res.flags)
    dev = [abs(r - 1) for r in ratios]
    dev_fine = [abs(r - 1) for r in refined]
    in_band = all(PARSEVAL_BAND[0] <= r <= PARSEVAL_BAND[1] for r in ratios)
    improves = all(b < a for a, b in zip(dev, dev_fine))
    ok = in_band and improves and not flags
    return Verdict("PASS" if ok else "FAIL", "verify.parseval", ratio_min=min(ratios), ratio_max=max(ratios),
                   dev_max=max(dev), refined_dev_max=max(dev_fine), refinement_improves=improves,
                   n=len(ratios), flags=sorted(set(flags)) or "none")


def verify_reproduce(cfg: RunConfig, args) -> Verdict:
    from .kernel import FrameKernel
    from .transform import analyze, reproduce_check

    tc = _tcfg(cfg, args.workers)
    K = FrameKernel(tc)
    errs = []
    for _, f in _phantoms(cfg, args):
        errs.append(reproduce_check(analyze(f, tc), K, tc).rel_error)
    ok = max(errs) <= REPRODUCE_TOL
    return Verdict("PASS" if ok else "FAIL", "verify.reproduce", err_max=max(errs), err_min=min(errs), n=len(errs))


def support_samples(pair, n: int = 20):
    """``(scale grid, grid)`` for the support scan: out-of-box shears and a dense lattice."""
    from .grid import make_grid
    from .windows import support_boxes

    p = pair.params
    boxes = support_boxes(p)
    d = p.d
    lo, hi = boxes.a_band_psi
    a_out = np.concatenate([np.geomspace(lo / 4, lo * 0.98, n // 2), np.geomspace(lo * 1.02, 1.0, n - n // 2)])
    rng = np.random.default_rng(12345)
    s_out = rng.uniform(-1.0, 1.0, (n, d - 1)) * boxes.d1
    axis = np.arange(n) % (d - 1)
    s_out[np.arange(n), axis] = np.sign(rng.uniform(-1, 1, n)) * boxes.d1[axis] * rng.uniform(1.01, 3.0, n)
    ncell = 32
    top = max(p.a1, max(p.b))
    grid = make_grid(d, ncell, ncell / (2.0 * 1.1 * top))
    return boxes, a_out, s_out, grid


def verify_supports(cfg: RunConfig, args) -> Verdict:
    from .windows import support_violation_scan

    pair = _pair(cfg)
    boxes, a_out, s_out, grid = support_samples(pair)
    scan = support_violation_scan(pair, boxes, a_out, s_out, grid)
    ctrl = support_violation_scan(pair, boxes, [1.0, 0.8, 0.6], np.zeros((1, pair.d - 1)), grid)
    ok = scan.max_leak <= LEAK_TOL and scan.n_in_box == 0 and ctrl.control_max > 0
    return Verdict("PASS" if ok else "FAIL", "verify.supports", max_leak=scan.max_leak, n_out=scan.n_out_of_box,
                   control=ctrl.control_max, n_control=ctrl.n_in_box)


def verify_smoothness(cfg: RunConfig, args) -> Verdict:
    from .windows import default_pair, smoothness_probe

    table = smoothness_probe(default_pair())
    ok = table.passes(1e-3)
    d3 = np.abs(table.near_a1[:, 3])
    return Verdict("PASS" if ok else "FAIL", "verify.smoothness", monotone=list(map(bool, table.monotone_a1())),
                   ratio=list(table.decay_ratio_a1()), d3=list(d3))


def verify_identities(cfg: RunConfig, args) -> Verdict:
    from .paramspace import weight_identity_check

    r = max(cfg.section("weights")["r"]) or 1.0
    rep = weight_identity_check(10_000, r, seed=cfg.seed)
    a, a2, m_def, m_printed = rep.example
    return Verdict("REPORT", "verify.identities", r=r, n=rep.n_samples, exact=rep.exact_identities_hold,
                   fine_fine_flagged=rep.printed_form_flagged, a=a, a_prime=a2, m_definition=m_def,
                   m_printed=m_printed, printed_below_one=rep.printed_below_one)


def inequality_suite(seed: int = 0, n_young: int = 100_000, n_schur: int = 1000):
    """Random Young, three-way Young and Schur/embedding instances; returns violation counts."""
    from .kernel import random_sampled_kernel, schur_bound_check, three_way_young_check, young_check

    rng = np.random.default_rng(seed)
    a = 10.0 ** rng.uniform(-3, 3, n_young)
    b = 10.0 ** rng.uniform(-3, 3, n_young)
    c = 10.0 ** rng.uniform(-3, 3, n_young)
    p = 1.0 + 10.0 ** rng.uniform(-6, 1, n_young)
    q = p / (p - 1.0)
    young_viol = int(np.sum(~young_check(a, b, p, q)))
    # three-way: reciprocal exponents drawn on the simplex, bounded away from 0
    u = rng.dirichlet([1.0, 1.0, 1.0], n_young)
    u = np.clip(u, 1e-6, None)
    u = u / u.sum(axis=1, keepdims=True)
    p1, p2 = 1.0 / u[:, 0], 1.0 / u[:, 1]
    p3 = 1.0 / (1.0 - 1.0 / p1 - 1.0 / p2)
    three_viol = int(np.sum(~three_way_young_check(a ** (1 / p1), b ** (1 / p2), c ** (1 / p3), p1, p2, p3)))
    kernels, fields = [], []
    for k in range(n_schur):
        n = 200 if k % 100 == 0 else int(rng.integers(2, 40))
        rank = 1 if k % 10 == 0 else None
        K = random_sampled_kernel(rng, n, r=float(rng.uniform(0, 2)), rank=rank)
        kernels.append(K)
        fields.append(rng.standard_normal(n) + 1j * rng.standard_normal(n))
    rep = schur_bound_check(kernels, fields, (1.0, 1.5, 2.0, math.inf))
    return young_viol, three_viol, rep


def verify_inequalities(cfg: RunConfig, args) -> Verdict:
    young, three, rep = inequality_suite(cfg.seed)
    ok = young == 0 and three == 0 and rep.passed
    return Verdict("PASS" if ok else "FAIL", "verify.inequalities", young_violations=young,
                   three_way_violations=three, schur_instances=rep.n_instances,
                   schur_violations=rep.schur_violations, embedding_checks=rep.embedding_checks,
                   embedding_violations=rep.embedding_violations)


VERIFY: dict[str, Callable] = {
    "calderon": verify_calderon,
    "parseval": verify_parseval,
    "reproduce": verify_reproduce,
    "supports": verify_supports,
    "smoothness": verify_smoothness,
    "identities": verify_identities,
    "inequalities": verify_inequalities,
}


def cmd_verify(cfg: RunConfig, args) -> Verdict:
    return VERIFY[args.check](cfg, args)


DISPATCH: dict[str, Callable] = {
    "gen-window": cmd_gen_window,
    "phantom": cmd_phantom,
    "analyze": cmd_analyze,
    "synthesize": cmd_synthesize,
    "verify": cmd_verify,
    "kernel-norm": cmd_kernel_norm,
    "coorbit-norm": cmd_coorbit_norm,
}


# ------------------------------------------------------------ entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"ERROR {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (default: shipped default_d3.json)")
    common.add_argument("--input", help="input file (VOL or SCF)")
    common.add_argument("--output", help="output file")
    common.add_argument("--workers", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--seed", type=int, default=None, help="seed override (unsigned 64-bit)")
    parser = _Parser(prog="shearcoorb", description="Inhomogeneous shearlet transform toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "verify":
            sp.add_argument("check", choices=CHECKS)
    return parser


def run(argv=None) -> int:
    """Parse ``argv``, run the command, print the verdict and return the exit code."""
    from .frame import NyquistError
    from .grid import GridError
    from .paramspace import ParamError
    from .transform import TransformError
    from .windows import WindowError

    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("ERROR --workers must be >= 1", file=sys.stderr)
        return 2
    if args.seed is not None and not (0 <= args.seed < 2**64):
        print("ERROR --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config or shipped_config_path())
        verdict = DISPATCH[args.command](cfg, args)
    except (ConfigError, InputError, GridError, WindowError, NyquistError, ParamError, TransformError) as exc:
        print(f"ERROR cmd={args.command} {exc}", file=sys.stderr)
        return 2
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"ERROR cmd={args.command} unreadable input: {exc}", file=sys.stderr)
        return 2
    print(verdict.line)
    return verdict.exit_code


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
