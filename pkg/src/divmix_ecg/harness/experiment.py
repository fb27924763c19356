"""Cross-validated baseline-vs-proposed comparison on synthetic data."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..config import TrainConfig
from ..errors import ConfigError, DegenerateVariance
from ..model import ModelConfig, predict_proba
from ..noisy_label import final_partitions, train, train_baseline
from ..signal_prep import SignalBank, lead_combo, prepare_dataset
from ..swa_ensemble import ensemble_proba
from .folds import stratified_kfold
from .metrics import evaluate, welch_t
from .synthetic import SyntheticConfig, generate_synthetic

log = logging.getLogger(__name__)

METHODS = ("baseline", "proposed")


@dataclass
class ExperimentConfig:
    folds: int = 10
    seeds: tuple = (0,)
    leads: tuple = (12,)
    methods: tuple = METHODS

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        self.leads = tuple(int(k) for k in self.leads)
        self.methods = tuple(self.methods)
        for k in self.leads:
            lead_combo(k)
        if not self.seeds or self.folds < 2:
            raise ConfigError("need at least one seed and two folds")
        if set(self.methods) - set(METHODS) or not self.methods:
            raise ConfigError(f"methods must be drawn from {METHODS}")


def fold_seed(seed: int, fold: int) -> int:
    return seed * 1000 + fold


def run_fold(method: str, cfg: TrainConfig, model_cfg: ModelConfig,
             train_bank: SignalBank, test_bank: SignalBank) -> dict:
    x_test, wide_test, _ = test_bank.eval_batch(np.arange(len(test_bank)))
    truth = test_bank.true_labels if test_bank.true_labels is not None else test_bank.labels
    row = {}
    if method == "baseline":
        net = train_baseline(cfg, train_bank, model_cfg)
        probs = predict_proba(net, x_test, wide_test, cfg.eval_batch_size)
    else:
        state = train(cfg, train_bank, model_cfg)
        members = state.ensemble().members if state.swa_nets is not None else state.nets
        probs = ensemble_proba(members, x_test, wide_test, cfg.eval_batch_size)
        parts = final_partitions(state, train_bank, cfg)
        row["clean_frac"] = [p.clean_fraction for p in parts]
    rep = evaluate(probs, truth, cfg.threshold)
    row.update(macro_f1=rep.macro_f1, macro_auc=rep.macro_auc, f1=[float(v) for v in rep.f1])
    return row


def _summarize(rows, exp: ExperimentConfig) -> dict:
    summary = {}
    for k in exp.leads:
        entry = {}
        for method in exp.methods:
            sel = [r for r in rows if r["leads"] == k and r["method"] == method]
            scores = np.array([r["macro_f1"] for r in sel])
            per_seed = [float(np.mean([r["macro_f1"] for r in sel if r["seed"] == s]))
                        for s in exp.seeds]
            entry[method] = {
                "mean": float(scores.mean()), "std": float(scores.std(ddof=1)) if len(scores) > 1 else 0.0,
                "per_seed": per_seed,
                "macro_auc": float(np.mean([r["macro_auc"] for r in sel])),
            }
            if method == "proposed":
                entry[method]["min_clean_frac"] = float(min(min(r["clean_frac"]) for r in sel))
        if set(METHODS) <= set(exp.methods):
            unit = "seed" if len(exp.seeds) >= 2 else "fold"
            if unit == "seed":
                a, b = entry["proposed"]["per_seed"], entry["baseline"]["per_seed"]
            else:
                a = [r["macro_f1"] for r in rows if r["leads"] == k and r["method"] == "proposed"]
                b = [r["macro_f1"] for r in rows if r["leads"] == k and r["method"] == "baseline"]
            try:
                t, dof, p = welch_t(a, b)
            except DegenerateVariance:
                t, dof, p = float("nan"), float("nan"), float("nan")
            base = entry["baseline"]["mean"]
            entry["welch"] = {"unit": unit, "t": t, "dof": dof, "p": p}
            entry["relative_improvement"] = (entry["proposed"]["mean"] - base) / base if base else float("nan")
        summary[str(k)] = entry
    return summary


def format_report(summary: dict, exp: ExperimentConfig, noise_rate: float) -> str:
    lines = [f"macro-F1 over {exp.folds}-fold CV, seeds {list(exp.seeds)}, label noise {noise_rate}",
             "", f"{'leads':>5} | " + " | ".join(f"{m:>17}" for m in exp.methods)
             + " | rel. impr. | Welch p"]
    for k in exp.leads:
        e = summary[str(k)]
        cells = [f"{e[m]['mean']:.3f} +- {e[m]['std']:.3f}".rjust(17) for m in exp.methods]
        tail = ""
        if "welch" in e:
            tail = f" | {100 * e['relative_improvement']:+9.1f}% | {e['welch']['p']:.2g}"
        lines.append(f"{k:>5} | " + " | ".join(cells) + tail)
    return "\n".join(lines) + "\n"


def run_experiment(exp: ExperimentConfig, syn: SyntheticConfig, cfg: TrainConfig,
                   model_cfg: ModelConfig, out_dir=None) -> dict:
    """Train every method on every (seed, lead combo, fold); summarize.

    Writes ``scores.jsonl`` (one line per fold and method, fixed order),
    ``summary.json`` and ``report.txt`` into ``out_dir`` when given.
    """
    if model_cfg.n_labels != syn.n_labels:
        raise ConfigError("model n_labels differs from the synthetic label count")
    rows = []
    for seed in exp.seeds:
        records = generate_synthetic(dataclasses.replace(syn, seed=seed))
        for k in exp.leads:
            combo = lead_combo(k)
            bank = SignalBank(prepare_dataset(records, combo, cfg.target_rate),
                              cfg.target_rate, cfg.window_s, cfg.min_duration_s)
            plan = stratified_kfold(bank.labels, exp.folds, seed=seed)
            for j in range(exp.folds):
                tr, te = plan.train_test(j)
                train_bank, test_bank = bank.subset(tr), bank.subset(te)
                fold_cfg = dataclasses.replace(cfg, seed=fold_seed(seed, j))
                for method in exp.methods:
                    log.info("seed %d leads %d fold %d %s", seed, k, j, method)
                    row = {"seed": seed, "leads": k, "fold": j, "method": method}
                    row.update(run_fold(method, fold_cfg, model_cfg, train_bank, test_bank))
                    log.info("  macro-F1 %.4f", row["macro_f1"])
                    rows.append(row)
    summary = _summarize(rows, exp)
    report = {"rows": rows, "summary": summary,
              "text": format_report(summary, exp, syn.noise_rate)}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "scores.jsonl", "w") as fh:
            for r in rows:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        (out / "report.txt").write_text(report["text"])
    return report
