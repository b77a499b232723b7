"""Command-line interface: ``pic-kit {ca,pice-train,compare,latent-dim,oracle}``.

Exit codes: 0 on success, 2 on invalid input or configuration, 3 on a
numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, exact_ca, nn, oracles, pice
from .core import NumericalFailure, PicError, SamplePairs
from .svg import scatter_svg

log = logging.getLogger("pic_kit")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class ParseError(PicError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass
class RunReport:
    command: str
    config: dict
    seed: int | None = None
    sigmas: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    factor_score_ratios: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    wall_clock_seconds: float = 0.0

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "report.json"
        self.outputs["report"] = str(path)
        doc = asdict(self)
        _check_finite(doc)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def _check_finite(obj, where="report"):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise NumericalFailure(f"non-finite value in {where}")
    elif isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{where}.{k}")
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _check_finite(v, where)


# -- CSV input -------------------------------------------------------------------


def _read_rows(path: Path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def read_pairs(path, header: bool = False) -> list[tuple[str, str]]:
    """Two-column CSV of categorical pairs; blank lines are skipped."""
    pairs = []
    for lineno, row in enumerate(_read_rows(Path(path)), start=1):
        if header and lineno == 1:
            continue
        if not row or all(not c.strip() for c in row):
            continue
        cells = [c.strip() for c in row]
        if len(cells) != 2 or not all(cells):
            raise ParseError(f"expected two non-empty fields, got {row!r}", lineno)
        pairs.append((cells[0], cells[1]))
    if not pairs:
        raise ParseError(f"{path} contains no pairs")
    return pairs


def read_table(path):
    """Contingency CSV: header ``,col1,col2,...`` then ``row_label,count,...``."""
    rows = _read_rows(Path(path))
    if len(rows) < 2:
        raise ParseError(f"{path} needs a header and at least one row")
    cols = [c.strip() for c in rows[0][1:]]
    labels, counts = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(cols) + 1:
            raise ParseError(f"expected {len(cols) + 1} fields, got {len(row)}", lineno)
        try:
            counts.append([float(c) for c in row[1:]])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
        labels.append(row[0].strip())
    C = np.asarray(counts)
    if np.any(C < 0):
        raise ParseError("counts must be non-negative")
    total = C.sum()
    if total <= 0:
        raise ParseError("table has no mass")
    return C / total, labels, cols


def read_matrix(path):
    """Numeric CSV with a header row. Returns ``(names, values)``."""
    rows = _read_rows(Path(path))
    if len(rows) < 2:
        raise ParseError(f"{path} needs a header and at least one data row")
    names = [c.strip() for c in rows[0]]
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(names):
            raise ParseError(f"expected {len(names)} fields, got {len(row)}", lineno)
        try:
            values.append([float(c) for c in row])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
    return names, np.asarray(values, dtype=np.float64)


def read_samples(path, x_cols=None, y_cols=None) -> SamplePairs:
    names, values = read_matrix(path)
    if x_cols is None:
        x_cols = [c for c in names if c.startswith("x_")]
    if y_cols is None:
        y_cols = [c for c in names if c.startswith("y_")]
    missing = [c for c in list(x_cols) + list(y_cols) if c not in names]
    if missing:
        raise ParseError(f"columns not found in {path}: {missing}")
    if not x_cols or not y_cols:
        raise ParseError(f"{path} needs x_* and y_* columns (or --x-cols/--y-cols)")
    xi = [names.index(c) for c in x_cols]
    yi = [names.index(c) for c in y_cols]
    return SamplePairs(values[:, xi], values[:, yi])


def write_samples(path, data: SamplePairs) -> Path:
    path = Path(path)
    px, py = data.xs.shape[1], data.ys.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{i}" for i in range(px)] + [f"y_{i}" for i in range(py)])
        for a, b in zip(data.xs, data.ys):
            w.writerow([repr(float(v)) for v in a] + [repr(float(v)) for v in b])
    return path


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def _fmt(v: float) -> str:
    return repr(float(v))


# -- commands ----------------------------------------------------------------------


def cmd_ca(args) -> RunReport:
    if args.table:
        pmf, rows, cols = read_table(args.input)
        joint = exact_ca.validate_joint(pmf, rows, cols)
    else:
        joint = exact_ca.contingency_from_samples(read_pairs(args.input, args.header))
    if min(joint.shape) < 2:
        raise ParseError(f"need at least two categories per side, got {joint.shape}")
    decomp, factors = exact_ca.decompose(joint, args.d if args.d is not None else "max")
    d = decomp.d
    out = args.out
    header = ["side", "label"] + [f"factor_{j + 1}" for j in range(d)]
    rows = [["ratio", ""] + [_fmt(r) for r in factors.factor_score_ratios]]
    rows += [["X", lab] + [_fmt(v) for v in decomp.F[i]] for i, lab in enumerate(joint.row_labels)]
    rows += [["Y", lab] + [_fmt(v) for v in decomp.G[i]] for i, lab in enumerate(joint.col_labels)]
    report = RunReport("ca", {"input": str(args.input), "table": args.table, "d": d})
    report.outputs["factors"] = str(_write_csv(out / "ca_factors.csv", header, rows))
    report.sigmas = decomp.sigmas.tolist()
    report.lambdas = decomp.lambdas.tolist()
    report.factor_score_ratios = factors.factor_score_ratios.tolist()

    if args.svg and d >= 1:
        def plane(T):
            return T[:, :2] if d >= 2 else np.column_stack([T[:, 0], np.zeros(len(T))])

        r = factors.factor_score_ratios
        svg = scatter_svg(
            [
                ("X", plane(decomp.F), joint.row_labels, "#1f77b4", "circle"),
                ("Y", plane(decomp.G), joint.col_labels, "#d62728", "square"),
            ],
            xlabel=f"factor 1 ({100 * r[0]:.1f}%)",
            ylabel=f"factor 2 ({100 * r[1]:.1f}%)" if d >= 2 else "",
            title="first factoring plane",
        )
        path = out / "ca_plane.svg"
        path.write_text(svg, encoding="utf-8")
        report.outputs["svg"] = str(path)

    if args.tau is not None:
        cands = [(lab, decomp.G[j]) for j, lab in enumerate(joint.col_labels)]
        rows = []
        for i, lab in enumerate(joint.row_labels):
            hits = analysis.tag_query(decomp.F[i], cands, args.tau)
            rows.append([lab, ";".join(str(h) for h in joint.col_labels if h in hits)])
        report.outputs["tags"] = str(_write_csv(out / "ca_tags.csv", ["x_label", "y_labels"], rows))
    return report


def _load_config(args, **defaults) -> pice.TrainingConfig:
    doc = dict(defaults)
    if args.config is not None:
        try:
            doc.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise pice.InvalidConfig(f"cannot read config {args.config}: {exc}") from exc
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    if getattr(args, "d", None) is not None:
        doc["d"] = args.d
        for k in ("f_arch", "g_arch"):
            if doc.get(k):
                doc[k] = list(doc[k][:-1]) + [args.d]
    return pice.TrainingConfig.from_dict(doc)


def _split(data: SamplePairs, test_rows: int):
    n = len(data)
    if test_rows <= 0:
        return data, None
    if test_rows > n - 2:
        raise ParseError(f"--test-rows {test_rows} leaves too few training rows (n={n})")
    return data.subset(slice(0, n - test_rows)), data.subset(slice(n - test_rows, n))


def cmd_pice_train(args) -> RunReport:
    data = read_samples(args.samples, args.x_cols, args.y_cols)
    config = _load_config(args)
    train_set, test_set = _split(data, args.test_rows)
    result = pice.train(config, train_set)
    F, G = pice.embed(result, train_set, config.clip_bound)
    wres = pice.whiten(F, G)

    out = args.out
    report = RunReport("pice-train", config.to_dict(), seed=config.seed)
    report.outputs["f_net"] = str(nn.save(result.f_net, out / "f_net.json"))
    report.outputs["g_net"] = str(nn.save(result.g_net, out / "g_net.json"))
    wpath = out / "whitening.json"
    wpath.write_text(json.dumps(wres.to_dict()) + "\n")
    report.outputs["whitening"] = str(wpath)
    report.outputs["loss"] = str(
        _write_csv(out / "loss.csv", ["epoch", "loss"],
                   [[e, _fmt(v)] for e, v in enumerate(result.loss_history)])
    )
    sig_rows = [[i + 1, _fmt(s), _fmt(s * s)] for i, s in enumerate(wres.sigma_hat)]
    report.outputs["sigmas"] = str(_write_csv(out / "sigmas.csv", ["index", "sigma", "lambda"], sig_rows))
    report.sigmas = wres.sigma_hat.tolist()
    report.lambdas = wres.lambdas.tolist()
    report.extra = {"n_train": len(train_set), "full_batch": result.full_batch}
    if test_set is not None:
        Ft, Gt = pice.apply_whitening(wres, *pice.embed(result, test_set, config.clip_bound))
        m = len(test_set)
        I = np.eye(config.d)
        report.extra.update(
            n_test=m,
            test_sigmas=(np.sum(Ft * Gt, axis=0) / m).tolist(),
            test_orthonormality_f=float(np.abs(Ft.T @ Ft / m - I).max()),
            test_orthonormality_g=float(np.abs(Gt.T @ Gt / m - I).max()),
        )
    return report


def cmd_latent_dim(args) -> RunReport:
    data = read_samples(args.samples, args.x_cols, args.y_cols)
    config = _load_config(args)
    result = pice.train(config, data)
    wres = pice.whiten(*pice.embed(result, data, config.clip_bound))
    floor = 1.0 / math.sqrt(len(data)) if args.floor is None else args.floor
    dim = analysis.latent_dimension(wres.sigma_hat, gap_ratio=args.gap_ratio, floor=floor)
    out = args.out
    report = RunReport("latent-dim", config.to_dict(), seed=config.seed)
    report.outputs["sigmas"] = str(
        _write_csv(out / "sigmas.csv", ["index", "sigma"],
                   [[i + 1, _fmt(s)] for i, s in enumerate(wres.sigma_hat)])
    )
    report.sigmas = wres.sigma_hat.tolist()
    report.lambdas = wres.lambdas.tolist()
    report.extra = {"latent_dimension": dim, "gap_ratio": args.gap_ratio, "floor": floor}
    print(dim)
    return report


def cmd_compare(args) -> RunReport:
    _, X = read_matrix(args.inputs)
    models = []
    for path in args.models:
        _, P = read_matrix(path)
        if P.shape[0] != X.shape[0]:
            raise ParseError(f"{path} has {P.shape[0]} rows, inputs have {X.shape[0]}")
        models.append((Path(path).stem, pice.check_likelihoods(P)))
    m = models[0][1].shape[1]
    if any(P.shape[1] != m for _, P in models):
        raise ParseError("all models must score the same label set")
    d = args.d if args.d is not None else m - 1
    config = _load_config(
        args, d=d, epochs=2000, learning_rate=0.05, batch_size=max(256, 4 * d),
        f_arch=[X.shape[1], 32, d], g_arch=[m, d], activation="tanh",
    )
    decomps = {}
    for name, P in models:
        res = pice.decompose_blackbox(P, X, config)
        decomps[name] = analysis.ModelDecomposition.from_blackbox(res)
    names = [n for n, _ in models]
    p_y = np.mean([decomps[n].p_y for n in names], axis=0)
    R = np.ones((len(names), len(names)))
    for i, a in enumerate(names):
        for j, b in enumerate(names):
            if i != j:
                R[i, j] = analysis.acc_ratio(decomps[a], decomps[b], p_y)
    out = args.out
    report = RunReport("compare", config.to_dict(), seed=config.seed)
    report.outputs["acc_ratio"] = str(
        _write_csv(out / "acc_ratio.csv", ["model"] + names,
                   [[a] + [_fmt(v) for v in R[i]] for i, a in enumerate(names)])
    )
    report.extra = {
        # JSON has no infinity; an unbounded ratio is written as the string "inf"
        "acc_ratio": [[v if math.isfinite(v) else "inf" for v in row] for row in R.tolist()],
        "models": {n: {"sigmas": np.sqrt(decomps[n].Lambda).tolist()} for n in names},
    }
    return report


def cmd_oracle(args) -> RunReport:
    out = args.out
    if args.kind == "bsc":
        s = oracles.bsc_pic_spectrum(args.n, args.delta, args.p)
        rows = [[i + 1, _fmt(v), _fmt(v * v)] for i, v in enumerate(s)]
        header = ["index", "sigma", "lambda"]
        cfg = {"kind": "bsc", "n": args.n, "delta": args.delta, "p": args.p}
        sig = s.tolist()
    else:
        spec = oracles.GaussianSpec(args.sigma1, args.sigma2)
        vals = [oracles.gaussian_pic_oracle(spec, i) for i in range(1, args.count + 1)]
        rows = [[v.index, _fmt(v.quadrature), _fmt(v.closed_form), _fmt(v.quadrature**2)] for v in vals]
        header = ["index", "sigma_quadrature", "sigma_closed_form", "lambda"]
        cfg = {"kind": "gaussian", "sigma1": args.sigma1, "sigma2": args.sigma2, "count": args.count}
        sig = [v.quadrature for v in vals]
    report = RunReport("oracle", cfg)
    report.outputs["spectrum"] = str(_write_csv(out / "spectrum.csv", header, rows))
    report.sigmas = sig
    report.lambdas = [v * v for v in sig]
    return report


# -- entry point --------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, training: bool = False):
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--d", type=int, default=None, help="embedding dimension")
    if training:
        p.add_argument("--config", type=Path, default=None, help="training config JSON")
        p.add_argument("--x-cols", type=lambda s: s.split(","), default=None)
        p.add_argument("--y-cols", type=lambda s: s.split(","), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pic-kit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ca", help="exact correspondence analysis of categorical data")
    p.add_argument("input", type=Path)
    p.add_argument("--table", action="store_true", help="input is a contingency table")
    p.add_argument("--header", action="store_true", help="skip the first line of a pairs file")
    p.add_argument("--svg", action="store_true", help="also draw the first factoring plane")
    p.add_argument("--tau", type=float, default=None, help="write Y labels within tau of each X label")
    _common(p)
    p.set_defaults(func=cmd_ca)

    p = sub.add_parser("pice-train", help="train the neural estimator on paired samples")
    p.add_argument("samples", type=Path)
    p.add_argument("--test-rows", type=int, default=0, help="hold out the last N rows")
    _common(p, training=True)
    p.set_defaults(func=cmd_pice_train)

    p = sub.add_parser("compare", help="accuracy-ratio matrix of black-box classifiers")
    p.add_argument("models", type=Path, nargs="+", help="n x m likelihood CSVs")
    p.add_argument("--inputs", type=Path, required=True, help="n x p input features CSV")
    p.add_argument("--config", type=Path, default=None)
    _common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("latent-dim", help="size of the latent space shared by two views")
    p.add_argument("samples", type=Path)
    p.add_argument("--gap-ratio", type=float, default=analysis.DEFAULT_GAP_RATIO)
    p.add_argument("--floor", type=float, default=None,
                   help="ignore values below this (default 1/sqrt(n))")
    _common(p, training=True)
    p.set_defaults(func=cmd_latent_dim)

    p = sub.add_parser("oracle", help="analytic or quadrature reference spectra")
    p.add_argument("kind", choices=["bsc", "gaussian"])
    p.add_argument("--n", type=int, default=5, help="bits (bsc)")
    p.add_argument("--delta", type=float, default=0.1, help="crossover probability (bsc)")
    p.add_argument("--p", type=float, default=0.5, help="input bit probability (bsc)")
    p.add_argument("--sigma1", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--count", type=int, default=4, help="number of indices (gaussian)")
    p.add_argument("--out", type=Path, default=Path("."))
    p.set_defaults(func=cmd_oracle)
    return parser


def _thread_limit():
    n = os.environ.get("PIC_KIT_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    limiter = _thread_limit()
    start = time.perf_counter()
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        report = args.func(args)
        report.wall_clock_seconds = time.perf_counter() - start
        report.write(args.out)
    except (NumericalFailure, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"pic-kit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (PicError, ValueError, OSError) as exc:
        print(f"pic-kit: {exc}", file=sys.stderr)
        return EXIT_INVALID
    finally:
        if limiter is not None:
            limiter.unregister()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
