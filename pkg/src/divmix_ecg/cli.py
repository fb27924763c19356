"""Command-line entry point: ``divmix-ecg <command> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import nn_core
from .config import TrainConfig, build_section, load_config
from .dataset import read_dataset, write_dataset
from .errors import DivMixError, InvalidInput
from .harness import (ExperimentConfig, SyntheticConfig, evaluate, generate_synthetic,
                      run_experiment, welch_t)
from .model import DEFAULT_THRESHOLD, ModelConfig, build, predict_proba
from .noisy_label import train
from .signal_prep import SignalBank, lead_combo, prepare_dataset
from .swa_ensemble import ensemble_proba, load_ensemble, load_network

log = logging.getLogger("divmix_ecg")


def _model_config(section: dict, n_labels=None) -> ModelConfig:
    section = dict(section)
    if n_labels is not None:
        section.setdefault("n_labels", n_labels)
    return build_section(ModelConfig, section, "model")


def _bank(data_dir, combo, rate, window_s, min_duration_s) -> SignalBank:
    records = prepare_dataset(read_dataset(data_dir), combo, rate)
    return SignalBank(records, rate, window_s, min_duration_s)


def _write_preds(path, ids, probs, threshold):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rid, p in zip(ids, probs):
            fh.write(json.dumps({"id": rid, "probabilities": [float(v) for v in p],
                                 "decisions": [int(v >= threshold) for v in p]}) + "\n")


def _read_preds(path):
    ids, probs = [], []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                ids.append(row["id"])
                probs.append(row["probabilities"])
    if not ids:
        raise InvalidInput(f"{path} holds no predictions")
    return ids, np.asarray(probs, dtype=np.float64)


def _numbers(arg: str) -> list:
    """Comma/whitespace separated numbers, inline or from a file."""
    path = Path(arg)
    text = path.read_text() if path.is_file() else arg
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise InvalidInput(f"cannot read numbers from {arg!r}") from None


def cmd_gen(args):
    cfg = load_config(args.config)
    section = dict(cfg.synthetic)
    for key in ("n_samples", "n_labels", "n_leads", "sample_rate", "noise_rate", "seed", "waveform"):
        value = getattr(args, key)
        if value is not None:
            section[key] = value
    syn = build_section(SyntheticConfig, section, "synthetic")
    write_dataset(args.out, generate_synthetic(syn))
    print(f"wrote {syn.n_samples} records to {args.out}")


def cmd_prep(args):
    combo = lead_combo(args.leads)
    records = prepare_dataset(read_dataset(args.inp), combo, args.rate)
    write_dataset(args.out, records)
    print(f"prepared {len(records)} records ({combo.n_channels} leads, {args.rate:g} Hz) in {args.out}")


def cmd_train(args):
    cfg = load_config(args.config)
    tc = cfg.train if args.seed is None else dataclasses.replace(cfg.train, seed=args.seed)
    combo = lead_combo(args.leads)
    bank = _bank(args.data, combo, tc.target_rate, tc.window_s, tc.min_duration_s)
    model_cfg = _model_config(cfg.model, bank.n_labels)
    state = train(tc, bank, model_cfg, out_dir=args.out, leads=combo,
                  save_epochs=not args.no_epoch_checkpoints)
    last = state.metrics[-1] if state.metrics else {}
    print(f"trained {state.epoch} epochs on {len(bank)} records; run saved in {args.out}")
    if "clean_frac1" in last:
        print(f"final clean fractions: {last['clean_frac1']:.3f} {last['clean_frac2']:.3f}")


def cmd_model_build(args):
    cfg = load_config(args.config)
    combo = lead_combo(args.leads)
    model_cfg = _model_config(cfg.model)
    net = build(model_cfg, combo.n_channels, seed=args.seed)
    meta = {"model_config": model_cfg.to_dict(), "n_channels": combo.n_channels,
            "leads": combo.name, "rate": cfg.train.target_rate, "window_s": cfg.train.window_s,
            "min_duration_s": cfg.train.min_duration_s}
    nn_core.save_checkpoint(args.out, net, meta)
    n_params = sum(p.numel() for p in net.parameters())
    print(f"wrote {args.out} ({n_params} parameters, {combo.n_channels} leads)")


def _meta_bank(meta, data_dir):
    defaults = TrainConfig()
    combo = lead_combo(meta.get("leads") or meta["n_channels"])
    return _bank(data_dir, combo, meta.get("rate", defaults.target_rate),
                 meta.get("window_s", defaults.window_s),
                 meta.get("min_duration_s", defaults.min_duration_s))


def cmd_model_predict(args):
    net, meta = load_network(args.ckpt)
    bank = _meta_bank(meta, args.inp)
    x, wide, _ = bank.eval_batch(np.arange(len(bank)))
    probs = predict_proba(net, x, wide)
    _write_preds(args.out, bank.ids, probs, args.threshold)
    print(f"wrote {len(bank)} predictions to {args.out}")


def cmd_ensemble_predict(args):
    ensemble, meta = load_ensemble(args.run)
    bank = _meta_bank(meta, args.inp)
    x, wide, _ = bank.eval_batch(np.arange(len(bank)))
    probs = ensemble_proba(ensemble, x, wide)
    _write_preds(args.out, bank.ids, probs, args.threshold)
    print(f"wrote {len(bank)} ensemble predictions to {args.out}")


def cmd_evaluate(args):
    pred_ids, probs = _read_preds(args.preds)
    records = read_dataset(args.data)
    true_ids = [r.id for r in records]
    use_true = all(r.true_labels is not None for r in records) and not args.noisy
    truth = np.stack([r.true_labels if use_true else r.labels for r in records])
    rep = evaluate(probs, truth, args.threshold, pred_ids=pred_ids, true_ids=true_ids)
    result = rep.to_dict()
    result["truth"] = "true_labels" if use_true else "labels"
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2))
    print(f"macro-F1 {rep.macro_f1:.4f}  macro-AUC {rep.macro_auc:.4f}  "
          f"(threshold {rep.threshold}, against {result['truth']})")
    for j, (f1, auc) in enumerate(zip(rep.f1, rep.auc)):
        flag = "  no positives" if j in rep.no_positive else ""
        print(f"  label {j:>2}: F1 {f1:.3f}  AUC {auc:.3f}{flag}")


def cmd_experiment(args):
    cfg = load_config(args.config)
    syn_section = dict(cfg.synthetic)
    if args.noise_rate is not None:
        syn_section["noise_rate"] = args.noise_rate
    if args.n_samples is not None:
        syn_section["n_samples"] = args.n_samples
    syn = build_section(SyntheticConfig, syn_section, "synthetic")
    exp_section = dict(cfg.experiment)
    for key in ("folds", "seeds", "leads"):
        value = getattr(args, key)
        if value is not None:
            exp_section[key] = value
    exp = build_section(ExperimentConfig, exp_section, "experiment")
    model_cfg = _model_config(cfg.model, syn.n_labels)
    report = run_experiment(exp, syn, cfg.train, model_cfg, out_dir=args.out)
    print(report["text"], end="")


def cmd_ttest(args):
    t, dof, p = welch_t(_numbers(args.a), _numbers(args.b))
    print(json.dumps({"t": t, "dof": dof, "p": p}))


def _int_list(text):
    return [int(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divmix-ecg",
        description="Noisy-label multi-label training for multichannel 1D signals.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="TOML file; its [synthetic] section is used")
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--n-labels", dest="n_labels", type=int)
    p.add_argument("--n-leads", dest="n_leads", type=int)
    p.add_argument("--sample-rate", dest="sample_rate", type=float)
    p.add_argument("--noise-rate", dest="noise_rate", type=float)
    p.add_argument("--waveform", choices=["sinusoid", "beat_template"])
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("prep", help="select leads, resample and normalize a dataset")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--leads", type=int, required=True, choices=[2, 3, 4, 6, 12])
    p.add_argument("--out", required=True)
    p.add_argument("--rate", type=float, default=TrainConfig().target_rate)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="co-train two networks and write a run directory")
    p.add_argument("--config")
    p.add_argument("--leads", type=int, required=True, choices=[2, 3, 4, 6, 12])
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-epoch-checkpoints", action="store_true",
                   help="skip the per-epoch network checkpoints")
    p.set_defaults(func=cmd_train)

    model = sub.add_parser("model", help="single-network utilities")
    msub = model.add_subparsers(dest="model_command", required=True)
    p = msub.add_parser("build", help="write a freshly initialized network")
    p.add_argument("--leads", type=int, required=True, choices=[2, 3, 4, 6, 12])
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_model_build)
    p = msub.add_parser("predict", help="predict with one network checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_model_predict)

    ens = sub.add_parser("ensemble", help="four-member ensemble of a finished run")
    esub = ens.add_subparsers(dest="ensemble_command", required=True)
    p = esub.add_parser("predict", help="mean probability of the four members")
    p.add_argument("--run", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_ensemble_predict)

    p = sub.add_parser("evaluate", help="score predictions against a dataset's labels")
    p.add_argument("--preds", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--noisy", action="store_true",
                   help="score against the (possibly noisy) training labels")
    p.add_argument("--out", help="write the full report as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="baseline vs proposed cross-validation")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int)
    p.add_argument("--seeds", type=_int_list, help="comma-separated, e.g. 0,1,2")
    p.add_argument("--leads", type=_int_list, help="comma-separated lead combos")
    p.add_argument("--noise-rate", dest="noise_rate", type=float)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("ttest", help="Welch's t-test on two score lists")
    p.add_argument("a", help="numbers (comma separated) or a file of numbers")
    p.add_argument("b")
    p.set_defaults(func=cmd_ttest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args)
    except (DivMixError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
