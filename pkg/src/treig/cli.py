"""Command-line front end: experiment configs, batch runs, bit-stable CSVs.

Experiments are described by INI files (sections: problem, contour, beyn,
tracker, outputs, analysis); the shipped presets/ directory holds one file
per reproduced dataset. All numeric output uses 17-significant-digit
decimal formatting, so identical configs produce byte-identical files
regardless of thread count.

Exit codes: 0 success, 1 runtime failure, 2 config error, 3 partial result
(budget exhausted; see MANIFEST.txt).
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import re
import sys
from dataclasses import dataclass, asdict, replace

import numpy as np

from . import analysis as ana
from .beyn import BeynConfig, ContourSpec, count_by_argument_principle, solve
from .bessel import bessel_j, bessel_j_prime, bessel_y, bessel_y_prime
from .nep import annulus_nep, disk_nep, toy_fixture
from .tracker import (
    AdaptiveConfig,
    detect_events,
    fit_splines,
    refine_near_events,
    track,
)

__all__ = ["ExperimentConfig", "load_config", "serialize_config", "main"]


class ConfigError(Exception):
    pass


_SCHEMA = {
    "problem": {"kind", "m", "r", "toy", "epsilon", "domain_min", "domain_max"},
    "contour": {"center_re", "center_im", "radius", "n_quad"},
    "beyn": {"hankel_blocks", "probe_cols", "rank_tol", "residual_tol",
             "seed", "subdivide"},
    "tracker": {"p_min", "p_max", "tol", "spline_degree", "max_samples",
                "initial_samples", "min_interval"},
    "outputs": {"directory", "files"},
    "analysis": {"tol_real", "fit_cap_fraction", "p_tail"},
}

_ALL_FILES = ("trajectories", "events", "indicators", "reports", "plotdata")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str                   # disk | annulus | toy
    m: int = 0
    r: float = None
    toy: str = None
    epsilon: float = None
    domain: tuple = None
    contour: ContourSpec = None
    beyn: BeynConfig = None
    tracker: AdaptiveConfig = None
    out_dir: str = "out"
    files: tuple = _ALL_FILES
    tol_real: float = None
    fit_cap_fraction: float = 0.1
    p_tail: float = None


def _line_of(path: str, section: str, key: str) -> int:
    """Best-effort line number of `key` inside `section` for error messages."""
    in_section = False
    try:
        with open(path) as f:
            for i, line in enumerate(f, start=1):
                s = line.strip()
                if s.startswith("["):
                    in_section = s == f"[{section}]"
                elif in_section and re.match(rf"{re.escape(key)}\s*[=:]", s):
                    return i
    except OSError:
        pass
    return 0


def _get(parser, section, key, conv, default=None):
    if not parser.has_section(section) or key not in parser[section]:
        return default
    raw = parser[section][key].strip()
    if raw.lower() in ("none", ""):
        return default
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def load_config(path: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                line = _line_of(path, section, key)
                raise ConfigError(
                    f"{path}:{line}: unknown key {key!r} in [{section}]")

    kind = _get(parser, "problem", "kind", str)
    if kind not in ("disk", "annulus", "toy"):
        raise ConfigError(f"[problem] kind must be disk|annulus|toy, got {kind!r}")
    m = _get(parser, "problem", "m", int, 0)
    r = _get(parser, "problem", "r", float)
    toy = _get(parser, "problem", "toy", str)
    epsilon = _get(parser, "problem", "epsilon", float)
    dom_lo = _get(parser, "problem", "domain_min", float)
    dom_hi = _get(parser, "problem", "domain_max", float)
    domain = (dom_lo, dom_hi) if dom_lo is not None and dom_hi is not None else None
    if kind == "annulus" and r is None:
        raise ConfigError("[problem] annulus needs the inner radius r")
    if kind == "toy" and toy is None:
        raise ConfigError("[problem] toy needs a fixture name (key 'toy')")

    contour = None
    if parser.has_section("contour"):
        contour = ContourSpec(
            center=complex(_get(parser, "contour", "center_re", float, 0.0),
                           _get(parser, "contour", "center_im", float, 0.0)),
            radius=_get(parser, "contour", "radius", float),
            n_quad=_get(parser, "contour", "n_quad", int, 1024),
        )

    seed = _get(parser, "beyn", "seed", int, 0)
    env_seed = os.environ.get("TREIG_SEED")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"TREIG_SEED = {env_seed!r} is not an integer") from exc
    beyn = BeynConfig(
        hankel_blocks=_get(parser, "beyn", "hankel_blocks", int, 3),
        probe_cols=_get(parser, "beyn", "probe_cols", int),
        rank_tol=_get(parser, "beyn", "rank_tol", float, 1e-8),
        residual_tol=_get(parser, "beyn", "residual_tol", float, 1e-7),
        rng_seed=seed,
        subdivide=_get(parser, "beyn", "subdivide", int, 0),
    )

    tracker = None
    if parser.has_section("tracker"):
        tracker = AdaptiveConfig(
            p_min=_get(parser, "tracker", "p_min", float),
            p_max=_get(parser, "tracker", "p_max", float),
            tol=_get(parser, "tracker", "tol", float, 1e-3),
            spline_degree=_get(parser, "tracker", "spline_degree", int, 7),
            max_samples=_get(parser, "tracker", "max_samples", int, 600),
            initial_samples=_get(parser, "tracker", "initial_samples", int, 17),
            min_interval=_get(parser, "tracker", "min_interval", float),
        )

    files = _get(parser, "outputs", "files", str, "all")
    files = _ALL_FILES if files == "all" else tuple(
        s.strip() for s in files.split(",") if s.strip())
    for f in files:
        if f not in _ALL_FILES:
            raise ConfigError(f"[outputs] unknown file kind {f!r}")

    return ExperimentConfig(
        kind=kind, m=m, r=r, toy=toy, epsilon=epsilon, domain=domain,
        contour=contour, beyn=beyn, tracker=tracker,
        out_dir=_get(parser, "outputs", "directory", str, "out"),
        files=files,
        tol_real=_get(parser, "analysis", "tol_real", float),
        fit_cap_fraction=_get(parser, "analysis", "fit_cap_fraction", float, 0.1),
        p_tail=_get(parser, "analysis", "p_tail", float),
    )


def serialize_config(cfg: ExperimentConfig) -> str:
    """Round-trippable INI text: parse(serialize(parse(F))) == parse(F)."""
    out = ["[problem]", f"kind = {cfg.kind}", f"m = {cfg.m}"]
    for key, val in (("r", cfg.r), ("toy", cfg.toy), ("epsilon", cfg.epsilon)):
        if val is not None:
            out.append(f"{key} = {val}")
    if cfg.domain is not None:
        out.append(f"domain_min = {cfg.domain[0]}")
        out.append(f"domain_max = {cfg.domain[1]}")
    if cfg.contour is not None:
        out += ["", "[contour]",
                f"center_re = {cfg.contour.center.real}",
                f"center_im = {cfg.contour.center.imag}",
                f"radius = {cfg.contour.radius}",
                f"n_quad = {cfg.contour.n_quad}"]
    b = cfg.beyn
    out += ["", "[beyn]", f"hankel_blocks = {b.hankel_blocks}"]
    if b.probe_cols is not None:
        out.append(f"probe_cols = {b.probe_cols}")
    out += [f"rank_tol = {b.rank_tol}", f"residual_tol = {b.residual_tol}",
            f"seed = {b.rng_seed}", f"subdivide = {b.subdivide}"]
    if cfg.tracker is not None:
        t = cfg.tracker
        out += ["", "[tracker]", f"p_min = {t.p_min}", f"p_max = {t.p_max}",
                f"tol = {t.tol}", f"spline_degree = {t.spline_degree}",
                f"max_samples = {t.max_samples}",
                f"initial_samples = {t.initial_samples}"]
        if t.min_interval is not None:
            out.append(f"min_interval = {t.min_interval}")
    out += ["", "[outputs]", f"directory = {cfg.out_dir}",
            f"files = {','.join(cfg.files)}"]
    out += ["", "[analysis]"]
    if cfg.tol_real is not None:
        out.append(f"tol_real = {cfg.tol_real}")
    out.append(f"fit_cap_fraction = {cfg.fit_cap_fraction}")
    if cfg.p_tail is not None:
        out.append(f"p_tail = {cfg.p_tail}")
    return "\n".join(out) + "\n"


def make_nep(cfg: ExperimentConfig):
    if cfg.kind == "disk":
        return disk_nep(cfg.m) if cfg.domain is None else disk_nep(cfg.m, cfg.domain)
    if cfg.kind == "annulus":
        return (annulus_nep(cfg.m, cfg.r) if cfg.domain is None
                else annulus_nep(cfg.m, cfg.r, cfg.domain))
    return toy_fixture(cfg.toy, cfg.epsilon)


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_lines(path, lines):
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def _write_csv(path, header, rows):
    _write_lines(path, [",".join(header)] + [",".join(r) for r in rows])


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: ExperimentConfig, p: float, out_dir: str) -> int:
    if cfg.kind in ("disk", "annulus") and p == 1.0:
        print("config error: p = 1 means n = p^2 ≡ 1 — the transmission "
              "problem is singular there (no refractive contrast)",
              file=sys.stderr)
        return 2
    nep = make_nep(cfg)
    if cfg.contour is None:
        raise ConfigError("solve needs a [contour] section")
    try:
        pairs = solve(nep, p, cfg.contour, cfg.beyn)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(out_dir, exist_ok=True)
    dim = nep.dimension
    header = ["re_kappa", "im_kappa", "residual"]
    for i in range(dim):
        header += [f"re_c{i}", f"im_c{i}"]
    rows = []
    for e in pairs:
        row = [_fmt(e.kappa.real), _fmt(e.kappa.imag), _fmt(e.residual)]
        for c in e.coeffs:
            row += [_fmt(np.real(c)), _fmt(np.imag(c))]
        rows.append(row)
    _write_csv(os.path.join(out_dir, "eigenpairs.csv"), header, rows)
    print(f"wrote {len(rows)} eigenpairs to {out_dir}/eigenpairs.csv")
    return 0


def _indicator_map(cfg, trajset):
    """Label -> IndicatorSeries for geometry problems (toys have none)."""
    if cfg.kind not in ("disk", "annulus"):
        return {}
    out = {}
    for lab in sorted(trajset.trajectories):
        t = trajset.trajectories[lab]
        out[lab] = ana.indicator_series(cfg.kind, cfg.m, t, cfg.r)
    return out


def cmd_track(cfg: ExperimentConfig, threads: int, out_dir: str) -> int:
    if cfg.contour is None or cfg.tracker is None:
        raise ConfigError("track needs [contour] and [tracker] sections")
    nep = make_nep(cfg)
    trajset = track(nep, cfg.contour, cfg.beyn, cfg.tracker, threads=threads)
    fit_splines(trajset)
    events = detect_events(trajset, tol_real=cfg.tol_real)
    bifs = [e for e in events if e.kind in ("real-touch", "collision")]
    if bifs:
        trajset = refine_near_events(trajset, bifs)
    indicators = _indicator_map(cfg, trajset)

    os.makedirs(out_dir, exist_ok=True)
    labels = sorted(trajset.trajectories)

    if "trajectories" in cfg.files:
        rows = []
        for lab in labels:
            for p, e in trajset.trajectories[lab].samples:
                rows.append([lab, _fmt(p), _fmt(e.kappa.real),
                             _fmt(e.kappa.imag), _fmt(e.residual)])
        _write_csv(os.path.join(out_dir, "trajectories.csv"),
                   ["label", "p", "re_kappa", "im_kappa", "residual"], rows)

    if "events" in cfg.files:
        rows = [[e.kind, _fmt(e.p_star), _fmt(e.kappa_star.real),
                 _fmt(e.kappa_star.imag), ";".join(e.labels)]
                for e in events]
        _write_csv(os.path.join(out_dir, "events.csv"),
                   ["kind", "p_star", "re_kappa_star", "im_kappa_star",
                    "labels"], rows)

    if "indicators" in cfg.files and indicators:
        rows = []
        for lab in labels:
            if lab in indicators:
                for p, i_val, i_bar in indicators[lab].samples:
                    rows.append([lab, _fmt(p), _fmt(i_val), _fmt(i_bar)])
        _write_csv(os.path.join(out_dir, "indicators.csv"),
                   ["label", "p", "I", "I_bar"], rows)

    reports = []
    if bifs and indicators:
        for ev in bifs:
            others = [abs(ev.p_star - q.p_star) for q in bifs if q is not ev]
            p_cap = cfg.fit_cap_fraction * min(others) if others else None
            reports.append(ana.classify_bifurcation(
                ev, trajset.trajectories, indicators, p_cap))
    if "reports" in cfg.files:
        payload = [asdict(rep) for rep in reports]
        for d in payload:
            d["labels"] = list(d["labels"])
        with open(os.path.join(out_dir, "reports.json"), "w", newline="\n") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")

    if "plotdata" in cfg.files:
        rows = []
        for lab in labels:
            for p, e in trajset.trajectories[lab].samples:
                rows.append([lab, _fmt(p), _fmt(e.kappa.real), _fmt(e.kappa.imag)])
        _write_csv(os.path.join(out_dir, "plot_complex_paths.csv"),
                   ["label", "p", "re_kappa", "im_kappa"], rows)
        if indicators:
            # sign convention for plots: the paper's figures draw -I_bar
            rows = []
            for lab in labels:
                if lab in indicators:
                    for p, _, i_bar in indicators[lab].samples:
                        rows.append([lab, _fmt(p), _fmt(i_bar), _fmt(-i_bar)])
            _write_csv(os.path.join(out_dir, "plot_indicator_curves.csv"),
                       ["label", "p", "I_bar", "neg_I_bar"], rows)
        if reports:
            rows = []
            for rep in reports:
                for lab in rep.labels:
                    ser = indicators.get(lab)
                    if ser is None:
                        continue
                    for p, _, i_bar in ser.samples:
                        if i_bar == 0 or p == rep.p_star:
                            continue
                        side = "left" if p < rep.p_star else "right"
                        rows.append([_fmt(rep.p_star), side, lab,
                                     _fmt(np.log10(abs(p - rep.p_star))),
                                     _fmt(np.log10(abs(i_bar)))])
            _write_csv(os.path.join(out_dir, "plot_rate_fits.csv"),
                       ["p_star", "side", "label", "log10_dp",
                        "log10_abs_I_bar"], rows)

    # limiting behavior of surviving non-real pairs (geometry problems)
    if cfg.kind in ("disk", "annulus") and "reports" in cfg.files:
        c, R = cfg.contour.center, cfg.contour.radius
        refs = ana.dirichlet_reference(
            cfg.kind, cfg.m, cfg.r,
            interval=(max(abs(c) - R, 1e-6), abs(c) + R))
        p_tail = cfg.p_tail if cfg.p_tail is not None else 0.5 * cfg.tracker.p_max
        try:
            limits = ana.laplacian_limit_check(trajset.trajectories, refs, p_tail)
        except ValueError:
            limits = []
        payload = []
        for row in limits:
            d = dict(row)
            k = d.pop("kappa_final")
            d["kappa_final_re"] = k.real
            d["kappa_final_im"] = k.imag
            payload.append(d)
        with open(os.path.join(out_dir, "limits.json"), "w", newline="\n") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")

    if trajset.unresolved:
        lines = ["# partial result: intervals abandoned on budget exhaustion",
                 "unresolved_intervals:"]
        for a, b in trajset.unresolved:
            lines.append(f"  {_fmt(a)} .. {_fmt(b)}")
        _write_lines(os.path.join(out_dir, "MANIFEST.txt"), lines)
        print(f"partial result: {len(trajset.unresolved)} unresolved intervals "
              f"(see {out_dir}/MANIFEST.txt)", file=sys.stderr)
        return 3
    print(f"tracked {len(labels)} trajectories, {len(events)} events -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# selftest


def _st_wronskian():
    for z in (0.7, 3.3, 1.0 + 0.5j):
        for m in (0, 1, 3):
            w = (bessel_j(m, z) * bessel_y_prime(m, z)
                 - bessel_j_prime(m, z) * bessel_y(m, z)) * (np.pi * z / 2.0)
            if abs(w - 1.0) > 1e-10:
                return f"Wronskian off by {abs(w - 1.0):.2e} at m={m}, z={z}"
    return None


def _st_fixture():
    path = os.path.join(os.path.dirname(__file__), "..", "..", "tests",
                        "fixtures", "bessel_real_axis.txt")
    path = os.path.normpath(path)
    if not os.path.exists(path):          # installed layout: fixture optional
        return None
    with open(path) as f:
        rows = [ln.split() for ln in f if ln.strip() and not ln.startswith("#")]
    for row in rows[:: max(1, len(rows) // 16)]:
        m, z = int(row[0]), float(row[1])
        vals = (bessel_j(m, z), bessel_y(m, z),
                bessel_j_prime(m, z), bessel_y_prime(m, z))
        for got, want_s in zip(vals, row[2:6]):
            want = float(want_s)
            if abs(got - want) > 1e-12 * max(1.0, abs(want)):
                return f"fixture mismatch at m={m}, z={z}: {got!r} vs {want_s}"
    return None


def _st_conjugate_closure():
    nep = disk_nep(0)
    pairs = solve(nep, 8.0, ContourSpec(2.5, 1.5, 1200),
                  BeynConfig(hankel_blocks=6, probe_cols=3, rng_seed=0))
    ks = np.array([e.kappa for e in pairs])
    for k in ks:
        if abs(k.imag) > 1e-9 and np.min(np.abs(ks - np.conj(k))) > 1e-7:
            return f"conjugate of {k:.6f} missing"
    return None


def _st_count_equals_winding():
    nep = disk_nep(0)
    contour = ContourSpec(2.5, 1.5, 1200)
    cfg = BeynConfig(hankel_blocks=6, probe_cols=3, rng_seed=0)
    n_beyn = sum(e.multiplicity for e in solve(nep, 8.0, contour, cfg))
    n_wind = count_by_argument_principle(nep, 8.0, contour)
    if n_beyn != n_wind:
        return f"count {n_beyn} != winding {n_wind}"
    return None


def _st_toys():
    pairs = solve(toy_fixture("crossing"), 0.5, ContourSpec(0.0, 1.0, 256),
                  BeynConfig(hankel_blocks=2, probe_cols=2, rng_seed=0))
    ks = sorted(e.kappa.real for e in pairs)
    if len(ks) != 2 or abs(ks[0] + 0.5) > 1e-10 or abs(ks[1] - 0.5) > 1e-10:
        return f"crossing spectrum at p=0.5 is {ks}"
    pairs = solve(toy_fixture("degenerate"), 0.3, ContourSpec(0.0, 1.0, 256),
                  BeynConfig(hankel_blocks=2, probe_cols=2, rng_seed=0))
    if len(pairs) != 1 or pairs[0].multiplicity != 2 or abs(pairs[0].kappa) > 1e-9:
        return "degenerate fixture did not give one defective root at 0"
    return None


def _st_integral_oracle():
    # int_0^1 x J_0(j01 x)^2 dx = J_1(j01)^2 / 2, via u = j01 x
    j01 = 2.404825557695772768622
    got = ana.bessel_product_integral("J", "Y", 0, 0.0, j01, 1.0, 0.0) / j01**2
    want = float(np.real(bessel_j(1, j01))) ** 2 / 2.0
    if abs(got - want) > 1e-12 * abs(want):
        return f"disk normalization integral {got!r} != {want!r}"
    return None


def cmd_selftest() -> int:
    checks = [
        ("wronskian", _st_wronskian),
        ("bessel-fixture", _st_fixture),
        ("conjugate-closure", _st_conjugate_closure),
        ("count-equals-winding", _st_count_equals_winding),
        ("toy-fixtures", _st_toys),
        ("integral-oracle", _st_integral_oracle),
    ]
    failed = 0
    for name, fn in checks:
        try:
            msg = fn()
        except Exception as exc:                      # noqa: BLE001
            msg = f"{type(exc).__name__}: {exc}"
        status = "PASS" if msg is None else "FAIL"
        if msg is not None:
            failed += 1
        print(f"{status:4s}  {name}" + (f"  ({msg})" if msg else ""))
    return 1 if failed else 0


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="treig",
        description="transmission-eigenvalue trajectories of disk and annulus")
    sub = ap.add_subparsers(dest="command", required=True)

    ap_solve = sub.add_parser("solve", help="one contour solve at fixed p")
    ap_solve.add_argument("--config", required=True)
    ap_solve.add_argument("--p", type=float, required=True)
    ap_solve.add_argument("--out", default=None)

    ap_track = sub.add_parser("track", help="full tracking pipeline")
    ap_track.add_argument("--config", required=True)
    ap_track.add_argument("--threads", type=int, default=1)
    ap_track.add_argument("--out", default=None)

    sub.add_parser("selftest", help="run the built-in invariant suite")

    args = ap.parse_args(argv)
    try:
        if args.command == "selftest":
            return cmd_selftest()
        cfg = load_config(args.config)
        out_dir = args.out if args.out is not None else cfg.out_dir
        if args.command == "solve":
            return cmd_solve(cfg, args.p, out_dir)
        return cmd_track(cfg, args.threads, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:                          # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
