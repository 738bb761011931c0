"""Command-line entry point: generate, train, eval, sample, grid."""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import ckpt, data
from .flow import PRESET_DATASETS, PRESETS, build_from_spec, preset
from .layers import ConfigError
from .train import TrainConfig, train, write_trace


class UsageError(Exception):
    pass


def _positive(name):
    def parse(text):
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer") from None
        if value < 1:
            raise argparse.ArgumentTypeError(f"{name} must be at least 1")
        return value
    return parse


def _load_arch(arch: str) -> dict:
    if arch in PRESETS:
        return preset(arch)
    try:
        with open(arch, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"--arch {arch!r} is neither a preset ({', '.join(sorted(PRESETS))}) nor a file") from None
    except json.JSONDecodeError as err:
        raise UsageError(f"descriptor {arch!r} is not valid JSON: {err}") from None


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def cmd_generate(args):
    ds = data.generate(args.dataset, args.n, args.seed)
    data.write_csv(args.out, ds.samples)
    print(f"wrote {args.n} rows to {args.out}")


def cmd_train(args):
    desc = _load_arch(args.arch)
    desc["seed"] = args.seed
    flow = build_from_spec(desc)
    dataset = args.dataset or PRESET_DATASETS.get(args.arch, "gaussians")
    train_x, _ = data.train_test(dataset, args.n_train, args.seed, dim=flow.data_dim)
    if train_x.shape[1] != flow.data_dim:
        raise UsageError(f"dataset {dataset} has {train_x.shape[1]} features, architecture expects {flow.data_dim}")
    config = TrainConfig(lr=args.lr, iterations=args.iters, batch_size=args.batch, seed=args.seed,
                         warmup_iters=args.warmup, decay_per_epoch=args.decay)
    print(f"parameters: {flow.num_parameters()}")
    result = train(flow, train_x, config)
    rng_state = json.dumps({"seed": args.seed, "dataset": dataset, "n_train": args.n_train,
                            "scheme": "shuffle=[seed,0,epoch] noise=[seed,1,iteration]"},
                           sort_keys=True).encode("utf-8")
    ckpt.save(flow, ckpt.TrainerState(result.state, rng_state, result.iteration), args.ckpt_out)
    write_trace(args.trace_out, result.trace)
    if result.trace:
        print(f"final mean nats: {result.trace[-1][2]:.6f}")
    print(f"wrote {args.ckpt_out} and {args.trace_out}")


def _eval_values(flow, x, metric, k, rng, batch=4096):
    out = []
    for start in range(0, len(x), batch):
        xb = x[start:start + batch]
        if metric == "nll":
            if not flow.exact:
                raise UsageError("metric nll needs an exact flow; use elbo or iwbo")
            out.append(flow.log_likelihood(xb).value)
        elif metric == "elbo":
            out.append(flow.log_prob(xb, rng).value)
        else:
            out.append(flow.iwbo(xb, k, rng).value)
    return np.concatenate(out)


def cmd_eval(args):
    flow, state = ckpt.load(args.ckpt)
    if args.metric == "iwbo" and args.k is None:
        raise UsageError("--metric iwbo needs --k")
    k = args.k if args.k is not None else 1
    dataset = args.dataset
    _, test_x = data.train_test(dataset, args.n, args.seed, dim=flow.data_dim)
    rng = np.random.default_rng(args.seed)
    logp = _eval_values(flow, test_x, args.metric, k, rng)
    nats = float(-logp.mean())
    bpd = nats / (flow.data_dim * math.log(2.0))
    print(f"{args.metric} mean nats: {nats:.10f}  bits/dim: {bpd:.10f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("index,log_prob\n")
            for i, v in enumerate(logp):
                fh.write(f"{i},{_fmt(v)}\n")


def cmd_sample(args):
    flow, _ = ckpt.load(args.ckpt)
    x = flow.sample(args.n, np.random.default_rng(args.seed))
    data.write_csv(args.out, x)
    print(f"wrote {args.n} samples to {args.out}")


def density_grid(flow, xmin, xmax, ymin, ymax, res, rng=None):
    """exp(log_prob) on cell centres; rows run from ymin to ymax."""
    xs = xmin + (np.arange(res) + 0.5) * (xmax - xmin) / res
    ys = ymin + (np.arange(res) + 0.5) * (ymax - ymin) / res
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    if flow.exact:
        lp = flow.log_likelihood(pts).value
    else:
        lp = flow.log_prob(pts, rng if rng is not None else np.random.default_rng(0)).value
    return xs, ys, np.exp(lp).reshape(res, res)


def write_ppm(path, dens: np.ndarray) -> None:
    """8-bit P5 image, max-normalized, top row = largest y."""
    top = dens.max()
    scaled = np.zeros_like(dens) if not top > 0 else dens / top
    img = np.clip(np.round(scaled[::-1] * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def cmd_grid(args):
    flow, _ = ckpt.load(args.ckpt)
    if flow.data_dim != 2:
        raise UsageError("grid needs a 2-D flow")
    if not (args.xmax > args.xmin and args.ymax > args.ymin):
        raise UsageError("grid bounds must satisfy xmin < xmax and ymin < ymax")
    xs, ys, dens = density_grid(flow, args.xmin, args.xmax, args.ymin, args.ymax, args.res,
                                np.random.default_rng(args.seed))
    if args.format == "ppm" or (args.format is None and str(args.out).endswith(".ppm")):
        write_ppm(args.out, dens)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("x,y,density\n")
            for j, y in enumerate(ys):
                for i, x in enumerate(xs):
                    fh.write(f"{_fmt(x)},{_fmt(y)},{_fmt(dens[j, i])}\n")
    print(f"wrote {args.res}x{args.res} grid to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="survae", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset as CSV")
    g.add_argument("--dataset", required=True, choices=data.NAMES)
    g.add_argument("--n", type=_positive("--n"), required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a flow and write a checkpoint and trace")
    t.add_argument("--arch", required=True, help="preset name or descriptor JSON file")
    t.add_argument("--dataset", choices=data.NAMES)
    t.add_argument("--iters", type=int, default=10000)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch", type=_positive("--batch"), default=128)
    t.add_argument("--warmup", type=int, default=0)
    t.add_argument("--decay", type=float, default=1.0)
    t.add_argument("--n-train", type=_positive("--n-train"), default=128000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--ckpt-out", required=True)
    t.add_argument("--trace-out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="mean nats on the test split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--dataset", required=True, choices=data.NAMES)
    e.add_argument("--metric", choices=("nll", "elbo", "iwbo"), default="nll")
    e.add_argument("--k", type=_positive("--k"))
    e.add_argument("--n", type=_positive("--n"), default=128000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sample", help="draw samples as CSV")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--n", type=_positive("--n"), required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    d = sub.add_parser("grid", help="density on a res x res lattice as CSV or PPM")
    d.add_argument("--ckpt", required=True)
    d.add_argument("--xmin", type=float, default=-4.0)
    d.add_argument("--xmax", type=float, default=4.0)
    d.add_argument("--ymin", type=float, default=-4.0)
    d.add_argument("--ymax", type=float, default=4.0)
    d.add_argument("--res", type=_positive("--res"), default=200)
    d.add_argument("--format", choices=("csv", "ppm"))
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_grid)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as err:
        print(f"survae {args.command}: error: {err}", file=sys.stderr)
        return 2
    except (ConfigError, ckpt.CheckpointError, ValueError, OSError) as err:
        print(f"survae {args.command}: error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
