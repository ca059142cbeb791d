"""Command-line driver: ``spikeattack <command> [--config PATH] [--seed N] [--out DIR]``.

Exit status is 0 on success, 1 for invalid configuration or inputs and 2
when a property suite fails.
"""

import argparse
import json
import os
import sys

from . import verify
from .attacks import run_attack, write_result_manifest
from .config import ConfigError, ExperimentConfig, load_config, validate
from .data import write_dataset
from .experiments import (attack_config, attack_subset, build_surrogate, classifier, load_data,
                          sweep_fig4, sweep_fig5, sweep_gamma, train_model)
from .numerics import ContractError
from .report import (RunRecord, slug, collect_records, emit_report, write_fig4_csv, write_fig5_csv,
                     write_gamma_csv, write_manifest)
from .snn import load_network, save_network
from .train import eval_accuracy

EXIT_OK, EXIT_INVALID, EXIT_PROPERTY = 0, 1, 2


def _load(args):
    if args.config:
        cfg = load_config(args.config)
        base = os.path.dirname(os.path.abspath(args.config))
    else:
        cfg, base = validate(ExperimentConfig()), "."
    if args.seed is not None:
        cfg.set_seed(args.seed)
    out = args.out or cfg.report.out
    return cfg, base, out


def _checkpoint_dir(cfg, base, out):
    return os.path.join(base, cfg.model.checkpoint) if cfg.model.checkpoint else os.path.join(out, "model")


def _training_method(ckpt):
    path = os.path.join(ckpt, "train_manifest.json")
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            return json.load(fh).get("training_method", "unknown")
    return "unknown"


def _load_model(cfg, base, out):
    ckpt = _checkpoint_dir(cfg, base, out)
    if not os.path.exists(os.path.join(ckpt, "network.json")):
        raise ContractError(f"no trained network at {ckpt!r}; run 'train' first "
                            "or set model.checkpoint")
    return load_network(ckpt), _training_method(ckpt)


def cmd_gen_data(cfg, base, out):
    data = load_data(cfg, base)
    d = os.path.join(out, "data")
    write_dataset(d, *data)
    write_manifest(os.path.join(d, "manifest.json"), cfg, cfg.data.seed,
                   n_train=len(data[1]), n_test=len(data[3]), dim=int(data[0].shape[1]))
    print(f"wrote dataset to {d}")


def cmd_train(cfg, base, out):
    data = load_data(cfg, base)
    net, history = train_model(cfg, data, log=lambda m: print(json.dumps(m, sort_keys=True)))
    ckpt = os.path.join(out, "model")
    save_network(net, ckpt)
    acc = eval_accuracy(classifier(cfg, net), data[2], data[3])
    write_manifest(os.path.join(ckpt, "train_manifest.json"), cfg, cfg.train.seed,
                   training_method=cfg.train.method, clean_acc=acc, history=history)
    print(f"clean accuracy {acc:.4f}; checkpoint in {ckpt}")


def cmd_attack(cfg, base, out):
    net, tmethod = _load_model(cfg, base, out)
    data = load_data(cfg, base)
    model = classifier(cfg, net)
    x, y = attack_subset(cfg, data[2], data[3])
    acfg = attack_config(cfg)
    sg = build_surrogate(cfg.attack)
    result = run_attack(model, x, y, acfg, sg)
    clean = eval_accuracy(model, x, y)
    run_dir = os.path.join(out, slug(f"attack_{acfg.method}_{sg.label()}_{acfg.n_iter}"))
    os.makedirs(run_dir, exist_ok=True)
    write_result_manifest(result, acfg, os.path.join(run_dir, "attack_result.json"),
                          surrogate=sg.label(), seed=cfg.attack.seed)
    with open(os.path.join(run_dir, "attack_result.json"), encoding="utf-8") as fh:
        doc = json.load(fh)
    doc.update(training_method=tmethod, clean_acc=clean, config_hash=cfg.digest())
    with open(os.path.join(run_dir, "attack_result.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    rec = RunRecord(tmethod, acfg.method, sg.label(), acfg.n_iter, acfg.eps, cfg.attack.seed,
                    clean, result.asr, result, sg.state if sg.adaptive else None)
    emit_report([rec], run_dir, cfg, cfg.attack.seed)
    print(f"{acfg.method} / {sg.label()}: ASR {result.asr:.4f} over clean-correct samples")


def cmd_sweep(cfg, base, out):
    net, _ = _load_model(cfg, base, out)
    data = load_data(cfg, base)
    model = classifier(cfg, net)
    x, y = attack_subset(cfg, data[2], data[3])
    kind = cfg.sweep.kind
    os.makedirs(out, exist_ok=True)
    written = []
    if kind in ("all", "fig4"):
        written.append(write_fig4_csv(os.path.join(out, "sweep_fig4.csv"),
                                      sweep_fig4(model, x, y, cfg)))
    if kind in ("all", "fig5"):
        written.append(write_fig5_csv(os.path.join(out, "sweep_fig5.csv"), cfg.sweep.budgets,
                                      sweep_fig5(model, x, y, cfg)))
    if kind in ("all", "gamma"):
        written.append(write_gamma_csv(os.path.join(out, "sweep_gamma.csv"),
                                       cfg.sweep.gamma_grid, sweep_gamma(model, x, y, cfg)))
    write_manifest(os.path.join(out, "sweep_manifest.json"), cfg, cfg.attack.seed,
                   outputs=[os.path.basename(p) for p in written])
    for p in written:
        print(f"wrote {p}")


def cmd_verify(cfg, base, out):
    results = verify.run_all()
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_PROPERTY if failed else EXIT_OK


def cmd_report(cfg, base, out):
    records = collect_records(out)
    emit_report(records, out, cfg, cfg.attack.seed)
    print(f"{len(records)} runs tabulated in {os.path.join(out, 'asr_table.csv')}")


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "attack": cmd_attack,
            "sweep": cmd_sweep, "verify": cmd_verify, "report": cmd_report}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are validation failures; status 2 is kept for property suites
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="spikeattack", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", metavar="PATH", help="flat key=value experiment file")
    p.add_argument("--seed", type=int, help="override data, training and attack seeds")
    p.add_argument("--out", metavar="DIR", help="output directory (default report.out)")
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:   # --help or a usage error
        return exc.code
    try:
        cfg, base, out = _load(args)
        status = COMMANDS[args.command](cfg, base, out)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_INVALID
    except (ContractError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK if status is None else status


if __name__ == "__main__":
    sys.exit(main())
