"""Command-line frontend: sample, validate, compare.

Output locations honor the DPPSAMPLE_OUT_DIR environment variable when
--out is a bare file name. All outputs are deterministic for a fixed
config: CSV coordinates use 17 significant digits, JSON is written with
sorted keys.
"""

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import lowrank, oracle, sampler
from .errors import DppError
from .kernels import KernelFamily, KernelSpec, unit_to_box

_FAMILIES = {"se": KernelFamily.SQUARE_EXPONENTIAL,
             "exponential": KernelFamily.EXPONENTIAL}


@dataclass
class RunConfig:
    """Parsed invocation; round-trips through to_dict/from_dict."""

    subcommand: str
    kernel: str = "se"
    lengthscales: tuple = (0.1,)
    dim: int = 1
    num: int = 10
    seed: int = 0
    box: tuple = None
    method: str = "exact"
    rank: tuple = ()
    out: str = None
    format: str = "csv"
    bisection_eps: float = sampler.BISECT_EPS
    jitter: float = 1e-10
    noise: float = 1e-6
    scale: float = 1.0
    num_state: int = 20
    warm: int = 20
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["lengthscales"] = list(self.lengthscales)
        d["rank"] = list(self.rank)
        d["box"] = None if self.box is None else [list(iv) for iv in self.box]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["lengthscales"] = tuple(d["lengthscales"])
        d["rank"] = tuple(d["rank"])
        if d.get("box") is not None:
            d["box"] = tuple(tuple(iv) for iv in d["box"])
        return cls(**d)

    def spec(self):
        ls = self.lengthscales
        if len(ls) == 1 and self.dim > 1:
            ls = ls * self.dim
        return KernelSpec(_FAMILIES[self.kernel], ls, self.dim, self.box)


def _parse_floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip() != "")


def _parse_ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip() != "")


def _parse_box(text, dim):
    """Box syntax: 'a,b x c,d x ...'; a single 'a,b' broadcasts to all dims."""
    parts = [p.strip() for p in text.split("x")]
    ivs = []
    for p in parts:
        vals = _parse_floats(p)
        if len(vals) != 2:
            raise ValueError(f"box interval needs two numbers, got {p!r}")
        ivs.append(vals)
    if len(ivs) == 1 and dim > 1:
        ivs = ivs * dim
    if len(ivs) != dim:
        raise ValueError(f"box has {len(ivs)} intervals for dim {dim}")
    return tuple(ivs)


def _resolve_out(path):
    if path is None:
        return None
    base = os.environ.get("DPPSAMPLE_OUT_DIR")
    if base and not os.path.dirname(path):
        return os.path.join(base, path)
    return path


def _write_csv(path, points):
    D = points.shape[1]
    lines = [",".join(f"x{d + 1}" for d in range(D))]
    for row in points:
        lines.append(",".join(f"{v:.17g}" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_json(path, points, config, extra_meta=None):
    payload = {
        "points": [[float(v) for v in row] for row in points],
        "config": config.to_dict(),
    }
    if extra_meta:
        payload["metadata"] = extra_meta
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------

def cmd_sample(cfg):
    spec = cfg.spec()
    try:
        if cfg.method == "exact":
            ps = sampler.draw(spec, cfg.num, cfg.seed, jitter=cfg.jitter,
                              eps=cfg.bisection_eps)
        elif cfg.method == "uniform":
            ps = sampler.draw_uniform(cfg.dim, cfg.num, cfg.seed)
        elif cfg.method in ("nystrom", "spectral"):
            F = cfg.rank[0] if cfg.rank else 16
            basis = (lowrank.nystrom_basis(spec, F, noise=cfg.noise)
                     if cfg.method == "nystrom"
                     else lowrank.spectral_basis(spec, F, noise=cfg.noise))
            ps = lowrank.approx_draw(basis, spec, cfg.num, cfg.seed,
                                     eps=cfg.bisection_eps)
        else:
            raise ValueError(f"unknown method {cfg.method!r}")
    except DppError as e:
        print(f"sampling failed: {e}", file=sys.stderr)
        return 1
    user_pts = np.array([unit_to_box(spec, p) for p in ps.points]) \
        if len(ps.points) else ps.points
    out = _resolve_out(cfg.out) or f"points_{cfg.seed}.{cfg.format}"
    if cfg.format == "csv":
        _write_csv(out, user_pts)
    else:
        _write_json(out, user_pts, cfg,
                    extra_meta={"method": ps.method, "unit_points":
                                [[float(v) for v in row] for row in ps.points]})
    return 0


def cmd_validate(cfg):
    report = oracle.run_validation(seed=cfg.seed, scale=cfg.scale,
                                   jitter=cfg.jitter)
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    out = _resolve_out(cfg.out)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if report["all_pass"] else 1


def cmd_compare(cfg):
    spec = cfg.spec()
    try:
        exact = sampler.draw(spec, cfg.num, cfg.seed, jitter=cfg.jitter)
        state_pts = exact.points[: cfg.num_state]
        grid = np.linspace(0.0, 1.0, 401)
        curves = {}
        sups = {}
        for F in cfg.rank:
            basis = (lowrank.nystrom_basis(spec, F, noise=cfg.noise)
                     if cfg.method == "nystrom"
                     else lowrank.spectral_basis(spec, F, noise=cfg.noise))
            sups[F] = lowrank.normalized_cdf_deviation(
                spec, state_pts, basis, grid=grid, jitter=cfg.jitter
            )
            approx_cdf = lowrank.approx_build_cdf(basis, state_pts, [], 0)
            curves[F] = approx_cdf.evaluate(grid) / approx_cdf.total_mass

        from .sampler import build_cdf
        from .state import DppState
        st = DppState(spec, jitter=cfg.jitter)
        for p in state_pts:
            st.push_point(p)
        exact_cdf = build_cdf(st, spec, [], 0)
        exact_curve = exact_cdf.evaluate(grid) / exact_cdf.total_mass

        F_draw = cfg.rank[-1]
        basis = (lowrank.nystrom_basis(spec, F_draw, noise=cfg.noise)
                 if cfg.method == "nystrom"
                 else lowrank.spectral_basis(spec, F_draw, noise=cfg.noise))
        warm = min(cfg.warm, cfg.num)
        approx = lowrank.approx_draw(basis, spec, cfg.num, cfg.seed,
                                     warm_start=exact.points[:warm])
        cov_exact = oracle.coverage_metrics(exact.points, method="exact",
                                            seeds=(cfg.seed,))
        cov_approx = oracle.coverage_metrics(approx.points, method=cfg.method,
                                             seeds=(cfg.seed,))
    except DppError as e:
        print(f"comparison failed: {e}", file=sys.stderr)
        return 1

    prefix = _resolve_out(cfg.out) or "compare"
    dev_path = f"{prefix}_deviation.csv"
    loc_path = f"{prefix}_locations.csv"
    cov_path = f"{prefix}_summary.json"

    header = ["t", "exact"] + [f"F{F}" for F in cfg.rank]
    lines = [",".join(header)]
    for i, t in enumerate(grid):
        row = [t, exact_curve[i]] + [curves[F][i] for F in cfg.rank]
        lines.append(",".join(f"{v:.17g}" for v in row))
    with open(dev_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    D = spec.dim
    header = [f"exact_x{d + 1}" for d in range(D)] + \
             [f"approx_x{d + 1}" for d in range(D)]
    lines = [",".join(header)]
    for i in range(cfg.num):
        row = list(exact.points[i]) + list(approx.points[i])
        lines.append(",".join(f"{v:.17g}" for v in row))
    with open(loc_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    summary = {
        "config": cfg.to_dict(),
        "sup_deviation_by_rank": {str(F): sups[F] for F in cfg.rank},
        "warm_start_rows": warm,
        "coverage": {
            "exact": asdict(cov_exact),
            cfg.method: asdict(cov_approx),
        },
    }
    with open(cov_path, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return 0


# ---------------------------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(
        prog="dppsample",
        description="Draw repulsive point sets on box domains; validate "
                    "the closed forms against brute-force oracles; compare "
                    "exact and finite-rank samplers.",
    )
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp):
        sp.add_argument("--kernel", choices=sorted(_FAMILIES), default="se")
        sp.add_argument("--lengthscale", default="0.1",
                        help="scalar or comma list, in unit-cube coordinates")
        sp.add_argument("--dim", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--domain", default=None,
                        help="box as 'a,b x c,d ...'; single 'a,b' broadcasts")
        sp.add_argument("--jitter", type=float, default=1e-10)
        sp.add_argument("--noise", type=float, default=1e-6,
                        help="observation noise of the finite-rank model")
        sp.add_argument("--bisection-eps", type=float,
                        default=sampler.BISECT_EPS)
        sp.add_argument("--out", default=None)

    ps_ = sub.add_parser("sample", help="draw a point set")
    common(ps_)
    ps_.add_argument("--num", type=int, default=10)
    ps_.add_argument("--method", default="exact",
                     choices=["exact", "uniform", "nystrom", "spectral"])
    ps_.add_argument("--rank", default="",
                     help="feature count for approximate methods")
    ps_.add_argument("--format", default="csv", choices=["csv", "json"])

    pv = sub.add_parser("validate", help="run the oracle suite")
    common(pv)
    pv.add_argument("--scale", type=float, default=1.0,
                    help="shrink (<1) or grow (>1) the config counts")

    pc = sub.add_parser("compare", help="exact vs finite-rank comparison data")
    common(pc)
    pc.add_argument("--num", type=int, default=40,
                    help="total chain length for the location columns")
    pc.add_argument("--method", default="nystrom",
                    choices=["nystrom", "spectral"])
    pc.add_argument("--rank", default="5,10,15", help="comma list of ranks")
    pc.add_argument("--num-state", type=int, default=20,
                    help="conditioning points for the deviation curves")
    pc.add_argument("--warm", type=int, default=20,
                    help="exact points copied into the approximate chain")
    return p


def _config_from_args(parser, args):
    try:
        ls = _parse_floats(args.lengthscale)
        if not ls:
            raise ValueError("empty lengthscale")
        box = _parse_box(args.domain, args.dim) if args.domain else None
        rank = _parse_ints(getattr(args, "rank", "") or "")
    except ValueError as e:
        parser.error(str(e))
    cfg = RunConfig(
        subcommand=args.subcommand,
        kernel=args.kernel,
        lengthscales=ls,
        dim=args.dim,
        num=getattr(args, "num", 0),
        seed=args.seed,
        box=box,
        method=getattr(args, "method", "exact"),
        rank=rank,
        out=args.out,
        format=getattr(args, "format", "csv"),
        bisection_eps=args.bisection_eps,
        jitter=args.jitter,
        noise=args.noise,
        scale=getattr(args, "scale", 1.0),
        num_state=getattr(args, "num_state", 20),
        warm=getattr(args, "warm", 20),
    )
    if len(cfg.lengthscales) not in (1, cfg.dim):
        parser.error(f"need 1 or {cfg.dim} lengthscales, got "
                     f"{len(cfg.lengthscales)}")
    if cfg.subcommand == "sample" and cfg.num < 1:
        parser.error("--num must be >= 1")
    if cfg.subcommand == "compare":
        if not cfg.rank:
            parser.error("--rank must list at least one feature count")
        if cfg.dim != 1:
            parser.error("compare is defined for --dim 1")
        if cfg.num < cfg.num_state:
            parser.error("--num must be >= --num-state")
    if cfg.subcommand == "sample" and cfg.method in ("nystrom", "spectral") \
            and len(cfg.rank) > 1:
        parser.error("sample takes a single --rank value")
    return cfg


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    cfg = _config_from_args(parser, args)
    if cfg.subcommand == "sample":
        return cmd_sample(cfg)
    if cfg.subcommand == "validate":
        return cmd_validate(cfg)
    return cmd_compare(cfg)


if __name__ == "__main__":
    sys.exit(main())
