"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 numeric/training error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, cnf, crf, dbn, fcm, latent
from .core import Dataset, load_dataset, standardize, write_dataset
from .errors import ConfigurationError, SleepFieldsError
from .optim import check_gradient
from .serialize import load_model, save_model
from .training import TrainConfig

log = logging.getLogger("sleepfields")

GRADCHECK_TOL = 1e-4


def _csv_values(text: str, kind=float) -> list:
    try:
        return [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"cannot parse {text!r} as a comma-separated list") from None


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--model", default="crf", choices=bench.MODELS)
    g.add_argument("--gates", type=int, default=3, help="gate count K (cnf, ldcnf)")
    g.add_argument("--hidden-per-label", type=int, default=2)
    g.add_argument("--hcrf-window", type=int, default=11)
    g.add_argument("--context-window", type=int, default=0, help="neighbour epochs fed to gates")
    g.add_argument("--max-segment", type=int, default=1000, help="training segment length cap")
    g.add_argument("--l2", type=float, default=1e-2)
    g.add_argument("--max-iter", type=int, default=500)
    g.add_argument("--tol", type=float, default=1e-5)
    g.add_argument("--optimizer", default="bfgs", choices=["bfgs", "lbfgs", "cg"])
    g.add_argument("--seed", type=int, default=0)


def _add_extractor_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("feature extraction")
    g.add_argument("--scenario", default="raw", choices=bench.SCENARIOS)
    g.add_argument("--clusters", type=int, default=5)
    g.add_argument("--fuzziness", type=float, default=1.05)
    g.add_argument("--fcm-tol", type=float, default=1e-6)
    g.add_argument("--fcm-max-iter", type=int, default=500)
    g.add_argument("--layers", default="64,32", help="DBN hidden layer sizes")
    g.add_argument("--epochs", type=int, default=200, help="DBN pretraining epochs")
    g.add_argument("--lr", type=float, default=0.05, help="DBN learning rate")
    g.add_argument("--backprop", action="store_true", help="fine-tune the whole DBN stack")


def _train_config(a) -> TrainConfig:
    return TrainConfig(
        l2=a.l2,
        optimizer=a.optimizer,
        tol=a.tol,
        max_iter=a.max_iter,
        max_segment=a.max_segment,
        context_window=a.context_window,
        gates=a.gates,
        hidden_per_label=a.hidden_per_label,
        hcrf_window=a.hcrf_window,
        seed=a.seed,
    )


def _fcm_config(a) -> fcm.FcmConfig:
    return fcm.FcmConfig(a.clusters, a.fuzziness, a.fcm_tol, a.fcm_max_iter, a.seed)


def _dbn_config(a) -> dbn.DbnConfig:
    return dbn.DbnConfig(
        hidden=tuple(_csv_values(a.layers, int)), epochs=a.epochs, lr=a.lr, seed=a.seed, backprop=a.backprop
    )


def _experiment(a) -> bench.ExperimentConfig:
    return bench.ExperimentConfig(
        model=a.model,
        scenario=a.scenario,
        folds=a.folds,
        seed=a.seed,
        train=_train_config(a),
        fcm=_fcm_config(a),
        dbn=_dbn_config(a),
        data_path=a.data,
        jobs=a.jobs,
    )


# --- commands -------------------------------------------------------------


def cmd_synth(a) -> None:
    d = bench.generate_synth(a.states, a.dim, a.sequences, a.length, a.separation, a.seed, a.self_transition)
    write_dataset(d, a.out)
    print(f"wrote {len(d)} sequences, {d.n_epochs} epochs to {a.out}")


def cmd_extract(a) -> None:
    data = load_dataset(a.data)
    if not a.no_standardize:
        data, _ = standardize(data, data)
    x = data.epochs()
    if a.extractor == "fcm":
        part = fcm.fit(x, _fcm_config(a))
        out = data.map_features(lambda e: fcm.transform(part, e))
        names = [f"c{k + 1}" for k in range(part.clusters)]
        print(f"fcm: {part.iterations} iterations, objective {part.history[-1]:.6g}")
    else:
        cfg = _dbn_config(a)
        model = dbn.finetune_softmax(dbn.pretrain(x, cfg), x, data.labels(), data.alphabet.size, cfg)
        out = data.map_features(lambda e: dbn.transform(model, e))
        names = [f"p_{n}" for n in data.alphabet.names]
    write_dataset(out, a.out, names)
    print(f"wrote {out.m}-dimensional features to {a.out}")


def cmd_train(a) -> None:
    data = load_dataset(a.data)
    if a.model == "dbn":
        raise ConfigurationError("the DBN is an extractor; use `extract dbn` or `cv --model dbn`")
    model = bench.fit_model(a.model, data, _train_config(a))
    save_model(model, a.out)
    print(f"saved {a.model} model to {a.out}")


def cmd_predict(a) -> None:
    model = load_model(a.model_file)
    data = load_dataset(a.data)
    names = model.alphabet.names
    preds = [bench.predict_model(model, x) for x, _ in data]
    with Path(a.out).open("w", encoding="utf-8") as fh:
        fh.write("sequence_id,epoch_index,label\n")
        for (x, _), p in zip(data, preds):
            for t, k in enumerate(p.labels):
                fh.write(f"{x.id},{t},{names[k]}\n")
    # file labels are indexed by first appearance; map them onto the model's alphabet
    truth_names = [data.alphabet.decode(y) for _, y in data]
    if all(n in names for seq in truth_names for n in seq):
        truth = [model.alphabet.encode(seq) for seq in truth_names]
        acc, _ = bench.evaluate(preds, truth, len(names))
        print(f"accuracy {bench.round_half_up(acc)}%")
    print(f"wrote predictions to {a.out}")


def _write_report(report: bench.CvReport, out: Path) -> None:
    # wall-clock hours go to their own file so the reports stay reproducible
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv(timing=False), encoding="utf-8")
    (out / "report.txt").write_text(report.to_text(timing=False), encoding="utf-8")
    (out / "confusion.csv").write_text(report.confusion_csv(), encoding="utf-8")
    (out / "timing.csv").write_text(report.timing_csv(), encoding="utf-8")


def cmd_cv(a) -> None:
    report = bench.run_cv(_experiment(a))
    print(report.to_text(), end="")
    if a.out:
        _write_report(report, Path(a.out))


def cmd_sweep(a) -> None:
    cfg = _experiment(a)
    kind = int if a.param in ("gates", "clusters", "hidden_per_label", "hcrf_window", "context_window") else float
    values = _csv_values(a.values, kind)
    reports = bench.sweep(cfg, a.param, values)
    print(bench.sweep_table(a.param, values, reports), end="")
    if a.out:
        out = Path(a.out)
        out.mkdir(parents=True, exist_ok=True)
        table = lambda fmt: bench.sweep_table(a.param, values, reports, fmt=fmt, timing=False)  # noqa: E731
        (out / "sweep.csv").write_text(table("csv"), encoding="utf-8")
        (out / "sweep.txt").write_text(table("text"), encoding="utf-8")
        for v, r in zip(values, reports):
            _write_report(r, out / f"{a.param}={v}")


def cmd_gradcheck(a) -> None:
    cfg = _train_config(a).with_(l2=a.l2)
    rng = np.random.default_rng(a.seed)
    if a.data:
        data: Dataset = load_dataset(a.data)
    else:
        data = bench.generate_synth(3, 3, 3, 5, 1.0, a.seed)
    if a.model == "crf":
        model = crf.CrfModel.zeros(data.alphabet, data.m, cfg.l2)
        fn = lambda v: crf.nll_and_gradient(model.from_vector(v), data)  # noqa: E731
    elif a.model == "cnf":
        model = cnf.CnfModel.init(data.alphabet, data.m, cfg.gates, rng, cfg.l2, cfg.context_window)
        fn = lambda v: cnf.nll_and_gradient(model.from_vector(v), data)  # noqa: E731
    elif a.model in latent.VARIANTS:
        model = latent.init_latent(a.model, data.alphabet, data.m, cfg, rng)
        fn = lambda v: latent.nll_and_gradient(model.from_vector(v), data)  # noqa: E731
    else:
        raise ConfigurationError(f"no gradient to check for model {a.model!r}")
    x = rng.normal(0.0, 0.5, size=model.to_vector().size)
    err = check_gradient(fn, x, a.eps)
    ok = err <= GRADCHECK_TOL
    print(f"{a.model}: {x.size} parameters, max relative error {err:.3e} ({'ok' if ok else 'FAIL'})")
    if not ok:
        raise SystemExit(4)


# --- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sleepfields", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic HMM dataset CSV")
    s.add_argument("--states", type=int, default=5)
    s.add_argument("--dim", type=int, default=6)
    s.add_argument("--sequences", type=int, default=20)
    s.add_argument("--length", type=int, default=150)
    s.add_argument("--separation", type=float, default=2.0)
    s.add_argument("--self-transition", type=float, default=0.9)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("extract", help="replace features by FCM memberships or DBN class probabilities")
    e.add_argument("extractor", choices=["fcm", "dbn"])
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--no-standardize", action="store_true")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--clusters", type=int, default=5)
    e.add_argument("--fuzziness", type=float, default=1.05)
    e.add_argument("--fcm-tol", "--tol", dest="fcm_tol", type=float, default=1e-6)
    e.add_argument("--fcm-max-iter", "--max-iter", dest="fcm_max_iter", type=int, default=500)
    e.add_argument("--layers", default="64,32")
    e.add_argument("--epochs", type=int, default=200)
    e.add_argument("--lr", type=float, default=0.05)
    e.add_argument("--backprop", action="store_true")
    e.set_defaults(func=cmd_extract)

    t = sub.add_parser("train", help="train a sequence model and save it")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    _add_train_flags(t)
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="label a dataset with a saved model")
    pr.add_argument("--model-file", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    for name, func, hlp in (
        ("cv", cmd_cv, "k-fold cross-validation"),
        ("sweep", cmd_sweep, "cross-validate over a list of hyperparameter values"),
    ):
        c = sub.add_parser(name, help=hlp)
        c.add_argument("--data", required=True)
        c.add_argument("--folds", type=int, default=10)
        c.add_argument("--jobs", type=int, default=1, help="folds run in parallel processes")
        c.add_argument("--out", help="directory for report files")
        _add_train_flags(c)
        _add_extractor_flags(c)
        if name == "sweep":
            c.add_argument("--param", required=True, choices=sorted(bench.SWEEP_PARAMS))
            c.add_argument("--values", required=True, help="comma-separated values")
        c.set_defaults(func=func)

    g = sub.add_parser("gradcheck", help="compare analytic gradients with central differences")
    g.add_argument("--data", help="dataset CSV (default: small synthetic toy)")
    g.add_argument("--eps", type=float, default=1e-5)
    _add_train_flags(g)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except SleepFieldsError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
