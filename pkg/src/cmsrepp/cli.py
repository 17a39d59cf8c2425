"""Command-line front end: classify, pressure, realize, validate."""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

EXIT_OK, EXIT_FAIL, EXIT_PRECONDITION, EXIT_G_ALPHA = 0, 1, 2, 3


class PreconditionError(Exception):
    pass


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _model_spec(text: str) -> dict | str:
    """Inline name (``hoc`` or ``hoc:alpha=0.5,p1=0.3``) or a JSON file path."""
    p = Path(text)
    if p.suffix == ".json" and p.exists():
        return json.loads(p.read_text())
    if ":" not in text:
        return text
    name, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        k, _, v = item.partition("=")
        try:
            params[k] = json.loads(v)
        except json.JSONDecodeError:
            params[k] = v
    return {"name": name, "params": params}


def _build(spec):
    from .model_zoo import build_model
    try:
        if isinstance(spec, str):
            return build_model(spec)
        return build_model(spec["name"], **spec.get("params", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise PreconditionError(str(exc)) from exc


def _n_list(text: str | None) -> list[int] | None:
    if text is None:
        return None
    return [int(v) for v in text.split(",") if v]


# ---------------------------------------------------------------- subcommands


def cmd_classify(args) -> int:
    from .stats_validate import UndeterminedPoint, point_classification, predict

    model = _build(_model_spec(args.model))
    if not args.point:
        raise PreconditionError("--point is required")
    try:
        point = model.point(args.point)
    except KeyError as exc:
        raise PreconditionError(str(exc.args[0])) from exc
    cls = point_classification(model, point)
    rec = model.recurrence()
    line = cls.kind.replace("_", " ")
    if cls.kind == "periodic":
        line += f" q={cls.q}"
    try:
        pred = predict(model, point, cls)
    except UndeterminedPoint as exc:
        print(f"{line}; no prediction ({exc})")
        return EXIT_PRECONDITION
    if pred.theta is not None:
        line += f", theta={pred.theta:.3f}"
    if pred.delay is not None:
        line += f", predicted delay {pred.delay}"
    elif pred.regime == "rpp_j_tilde":
        line += ", predicted delay measured by simulation"
    else:
        line += f", predicted {pred.regime.upper()}"
    print(line)
    print(f"recurrence: {rec.label}")
    if cls.certificate:
        print(f"certificate: {cls.certificate}")
    if args.out:
        doc = {"classification": cls.to_json(), "recurrence": rec.label, "prediction": pred.to_json()}
        _write_atomic(Path(args.out) / "classification.json", json.dumps(doc, indent=2, default=str))
    return EXIT_OK


def cmd_pressure(args) -> int:
    from .thermo import PressureError, Potential, gurevich_pressure, partition_sums, weighted_matrix

    model = _build(_model_spec(args.model))
    phi = Potential.const(0.0) if args.potential == "zero" else model.potential().normalized
    v = model.base_symbol if args.v is None else json.loads(args.v)
    n_max = args.n_max
    try:
        sums = partition_sums(phi, model.ts, v, n_max)
        finite = getattr(model, "total_mass", None) is not None and len(model.ts.alphabet) <= 512
        mat = weighted_matrix(phi, model.ts) if finite else None
        rep = gurevich_pressure(sums, matrix=mat, stochastic=args.potential != "zero" and mat is None)
    except (PressureError, ValueError) as exc:
        raise PreconditionError(str(exc)) from exc
    print(f"P_G = {rep.P_G:.12g} (method {rep.method})")
    if args.out:
        _write_atomic(Path(args.out) / "pressure.json", rep.to_json())
    return EXIT_OK


def _load_tail(path: str):
    """A LawSpec JSON document, or {"t": [...], "tail": [...]} pairs."""
    from . import limit_laws as ll

    doc = json.loads(Path(path).read_text())
    if "kind" in doc:
        law = ll.law_from_json(doc)
    elif "t" in doc and "tail" in doc:
        law = ll.tabulated_tail(doc["t"], doc["tail"], doc.get("atom", 0.0))
    else:
        raise PreconditionError("target law file needs a 'kind' or 't'/'tail' arrays")
    return law, (lambda t: float(ll.law_tail(law, t)))


def cmd_realize(args) -> int:
    from .limit_laws import GAlphaViolation
    from .model_zoo.realizer import ScheduleError, realize_target_law

    law, tail = _load_tail(args.target)
    try:
        plan = realize_target_law(tail, args.alpha, n_levels=args.levels)
    except GAlphaViolation as exc:
        print(f"target law is outside G_alpha: {exc} (at t={exc.t:.6g})", file=sys.stderr)
        return EXIT_G_ALPHA
    except (ScheduleError, ValueError) as exc:
        raise PreconditionError(str(exc)) from exc
    model = plan.build(args.k_real)
    devs = {n: plan.delay_deviation(n) for n in range(1, plan.levels + 1)}
    for n, d in devs.items():
        print(f"level {n}: sup |delay tail - target| = {d:.4f}")
    if args.out:
        out = Path(args.out)
        _write_atomic(out / "realizer_plan.json", plan.to_json())
        _write_atomic(out / "model.json", model.to_json())
    return EXIT_OK


def cmd_validate(args) -> int:
    from .repp_engine import HorizonError
    from .stats_validate import run_experiment

    cfg: dict = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
    if args.model:
        cfg["model"] = _model_spec(args.model)
    if args.point:
        cfg["point"] = args.point
    for key, val in (("n", _n_list(args.n)), ("replicas", args.replicas), ("seed", args.seed),
                     ("horizon", args.horizon)):
        if val is not None:
            cfg[key] = val
    if args.strict:
        cfg["strict"] = True
    if "seed" not in cfg:
        raise PreconditionError("a seed is required (--seed or config 'seed')")
    if "model" not in cfg:
        raise PreconditionError("a model is required (--model or config 'model')")
    cfg.setdefault("id", f"{cfg['model'] if isinstance(cfg['model'], str) else cfg['model']['name']}"
                         f"-{cfg.get('point', 'union')}")
    try:
        rep = run_experiment(cfg)
    except (HorizonError, KeyError, ValueError) as exc:
        raise PreconditionError(str(exc)) from exc
    print(rep.table())
    if args.out:
        out = Path(args.out)
        _write_atomic(out / "report.json", rep.to_json(with_timing=False))
        _write_atomic(out / "timing.json", json.dumps(rep.timing, indent=2))
        _write_atomic(out / "curves.csv", rep.curves_csv())
        if rep.sample is not None:
            _write_atomic(out / "sample.csv", rep.sample.to_csv())
    if rep.verdict is None:
        return EXIT_PRECONDITION
    return EXIT_OK if rep.verdict else EXIT_FAIL


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cmsrepp", description="Return-time statistics on countable Markov shifts.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, model_required=True):
        p.add_argument("--model", required=model_required, help="model name, name:key=val,..., or JSON file")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("classify", help="classify a named point and print the predicted limit")
    common(p)
    p.add_argument("--point")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("pressure", help="Gurevich pressure by partition sums")
    common(p)
    p.add_argument("--v", help="base symbol as JSON (default: the model's base symbol)")
    p.add_argument("--n-max", type=int, default=30)
    p.add_argument("--potential", choices=["normalized", "zero"], default="normalized")
    p.set_defaults(func=cmd_pressure)

    p = sub.add_parser("realize", help="build a chain whose delay limit is a given law")
    p.add_argument("--target", required=True, help="law JSON file")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--k-real", type=int, default=32)
    p.add_argument("--out")
    p.set_defaults(func=cmd_realize)

    p = sub.add_parser("validate", help="simulate and compare against the predicted limit")
    common(p, model_required=False)
    p.add_argument("--config", help="experiment JSON")
    p.add_argument("--point")
    p.add_argument("--n", help="comma-separated depths, e.g. 4,6,8")
    p.add_argument("--replicas", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--strict", action="store_true", help="turn horizon warnings into errors")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
