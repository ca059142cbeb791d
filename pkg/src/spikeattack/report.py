"""CSV and JSON artefacts: ASR tables, traces, histograms and manifests."""

import csv
import json
import os
import platform
import re
from dataclasses import dataclass

import numpy as np
import scipy

from . import __version__, kernels
from .assg import write_histogram_csv
from .attacks import write_loss_trace

ASR_HEADER = ["training_method", "attack", "surrogate", "n_iter", "eps", "seed",
              "clean_acc", "asr"]
ASR_CONVENTION = "fraction of clean-correct samples misclassified after the attack"


@dataclass
class RunRecord:
    training_method: str
    attack: str
    surrogate: str
    n_iter: int
    eps: float
    seed: int
    clean_acc: float
    asr: float
    result: object = None       # AttackResult, for the loss trace
    state: object = None        # AssgState, for the sharpness histogram

    def row(self):
        return [self.training_method, self.attack, self.surrogate, self.n_iter,
                repr(float(self.eps)), self.seed, repr(float(self.clean_acc)),
                repr(float(self.asr))]

    @property
    def tag(self):
        return slug(f"{self.training_method}_{self.attack}_{self.surrogate}_{self.n_iter}_s{self.seed}")


def slug(text):
    """Filesystem-safe version of a run label."""
    return re.sub(r"[^A-Za-z0-9.]+", "-", text).strip("-")


def versions():
    return {"spikeattack": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernel_backend": kernels.backend()}


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_manifest(path, cfg=None, seed=None, **extra):
    doc = {"seed": seed, "versions": versions(), "asr_convention": ASR_CONVENTION}
    if cfg is not None:
        doc["config_hash"] = cfg.digest()
        doc["config"] = cfg.canonical()
    doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return path


def emit_report(records, out_dir, cfg=None, seed=None, hist_bins=20):
    """Write the ASR table plus per-run traces and histograms; return the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [write_csv(os.path.join(out_dir, "asr_table.csv"), ASR_HEADER,
                       [r.row() for r in records])]
    for r in records:
        if r.result is not None:
            p = os.path.join(out_dir, f"trace_{r.tag}.csv")
            write_loss_trace(r.result, p)
            paths.append(p)
        if r.state is not None and r.state.M:
            p = os.path.join(out_dir, f"hist_{r.tag}.csv")
            write_histogram_csv(r.state, p, bins=hist_bins)
            paths.append(p)
    runs = [dict(zip(ASR_HEADER, r.row())) for r in records]
    paths.append(write_manifest(os.path.join(out_dir, "manifest.json"), cfg, seed, runs=runs))
    return paths


def collect_records(root):
    """Rebuild :class:`RunRecord` rows from ``attack_result.json`` files under ``root``."""
    records = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        if "attack_result.json" in filenames:
            with open(os.path.join(dirpath, "attack_result.json"), encoding="utf-8") as fh:
                doc = json.load(fh)
            records.append(RunRecord(doc["training_method"], doc["method"], doc["surrogate"],
                                     doc["n_iter"], doc["eps"], doc["seed"], doc["clean_acc"],
                                     doc["final_asr"]))
    return records


def write_fig4_csv(path, rows):
    return write_csv(path, ["surrogate", "parameter", "asr"],
                     [[s, repr(float(p)), repr(float(a))] for s, p, a in rows])


def write_fig5_csv(path, budgets, rows):
    return write_csv(path, ["method"] + [f"iter_{b}" for b in budgets],
                     [[m] + [repr(float(a)) for a in asrs] for m, asrs in rows])


def write_gamma_csv(path, gammas, asrs):
    return write_csv(path, [f"gamma_{g:g}" for g in gammas], [[repr(float(a)) for a in asrs]])
