"""Command-line driver for reproducible experiments.

Every command reads a typed INI config, applies ``--seed`` / ``--override``,
computes all of its outputs in memory, and only then writes them (each file
via a temporary name and an atomic rename) together with the fully resolved
config.  Validation failures exit with status 2 and write nothing.

    reproto protos gen   --config exp.ini --out runs/protos
    reproto train        --config exp.ini --override training.regime=softmax
    reproto curve        --config exp.ini --override model.path=runs/rep/model.txt
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import os
import sys
import tempfile
import zlib
from pathlib import Path

import numpy as np

from . import attacks, data, evaluation, model as model_mod, prototypes, training
from .geometry import Metric


class ConfigError(ValueError):
    pass


def _floats(text):
    return [float(v) for v in text.replace(" ", "").split(",") if v]


def _ints(text):
    return [int(v) for v in text.replace(" ", "").split(",") if v]


def _paths(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(conv):
    def parse(text):
        return None if text.strip() in ("", "none") else conv(text)
    return parse


# section -> key -> (parser, default text)
SCHEMA = {
    "seeds": {"seed": (int, "0")},
    "data": {
        "kind": (str, "gaussians"),
        "k": (int, "5"),
        "input_dim": (int, "10"),
        "center_spread": (float, "1.0"),
        "sigma": (float, "0.08"),
        "n_per_class": (int, "600"),
        "noise": (float, "0.03"),
        "path": (str, ""),
        "train_fraction": (float, "0.8333333333333334"),
    },
    "prototypes": {
        "D": (int, "50"),
        "metric": (str, "l2"),
        "r": (float, "1.0"),
        "mu": (float, "0.01"),
        "epochs": (int, "100"),
        "eps": (float, "1.0"),
        "bound": (_optional(float), ""),
        "path": (str, ""),
    },
    "model": {
        "hidden": (_ints, "64,64"),
        "path": (str, ""),
    },
    "training": {
        "regime": (str, "repulsive"),
        "base_regime": (str, "softmax"),
        "loss_mode": (str, "squared_distance"),
        "epochs": (int, "30"),
        "batch_size": (int, "64"),
        "schedule": (str, "cyclical"),
        "lr": (float, "0.02"),
        "base_lr": (float, "0.0001"),
        "cycle_epochs": (float, "30"),
        "decay_epochs": (_ints, "50,100"),
        "decay_factor": (float, "0.1"),
        "momentum": (float, "0.9"),
        "alpha": (float, "0.0"),
        "adv_iters": (int, "7"),
        "early_stop": (_bool, "false"),
        "eval_every": (int, "1"),
        "patience": (_optional(int), ""),
        "es_iters": (int, "5"),
        "es_subset": (_optional(int), "200"),
        "augment": (_bool, "false"),
    },
    "attack": {
        "metric": (str, "linf"),
        "eps": (float, "0.1"),
        "eps_units": (str, "absolute"),
        "step_size": (_optional(float), ""),
        "n_iters": (int, "20"),
        "restarts": (int, "1"),
        "init": (str, "at_input"),
        "surrogate": (str, "auto"),
    },
    "evaluation": {
        "eps_list": (_floats, "0,0.02,0.04,0.06,0.08,0.1,0.12,0.14,0.16"),
        "substitute": (str, ""),
        "targets": (_paths, ""),
        "d_list": (_ints, ""),
    },
    "output": {"dir": (str, "out")},
}

_FILE_KEYS = {("data", "path"), ("prototypes", "path"), ("model", "path"),
              ("evaluation", "substitute"), ("evaluation", "targets")}


def derive_seed(seed: int, component: str, index: int = 0) -> int:
    """Child seed for ``component``; stable across runs and platforms."""
    ss = np.random.SeedSequence([seed, zlib.crc32(component.encode()), index])
    return int(ss.generate_state(1)[0])


def load_config(path=None, overrides=(), seed=None, out=None):
    """Parse, override, type-check and validate an experiment config.

    Returns ``(values, parser)`` where ``values[section][key]`` is typed and
    ``parser`` holds the resolved text form.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, keys in SCHEMA.items():
        parser[section] = {k: default for k, (_, default) in keys.items()}
    if path is not None:
        user = configparser.ConfigParser(interpolation=None)
        user.optionxform = str
        try:
            with open(path) as fh:
                user.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for section in user.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, value in user[section].items():
                _set(parser, section, key, value)
    for item in overrides:
        dotted, sep, value = item.partition("=")
        section, dot, key = dotted.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        _set(parser, section, key, value.strip())
    if seed is not None:
        _set(parser, "seeds", "seed", str(seed))
    if out is not None:
        _set(parser, "output", "dir", str(out))

    values = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (conv, _) in keys.items():
            text = parser[section][key]
            try:
                values[section][key] = conv(text)
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}: {exc}") from None
    for section, key in _FILE_KEYS:
        entry = values[section][key]
        for p in entry if isinstance(entry, list) else [entry]:
            if p and not Path(p).is_file():
                raise ConfigError(f"{section}.{key}: file {p!r} does not exist")
    return values, parser


def _set(parser, section, key, value):
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key {section}.{key}")
    parser[section][key] = value


# -- builders from config --------------------------------------------------

def build_dataset(cfg):
    d, seed = cfg["data"], cfg["seeds"]["seed"]
    if d["kind"] == "gaussians":
        ds = data.gen_gaussians(d["k"], d["input_dim"], d["center_spread"], d["sigma"],
                                d["n_per_class"], derive_seed(seed, "data"))
    elif d["kind"] == "spirals":
        ds = data.gen_spirals(d["k"], d["n_per_class"], d["noise"], derive_seed(seed, "data"))
    elif d["kind"] == "csv":
        if not d["path"]:
            raise ConfigError("data.kind=csv needs data.path")
        ds = data.load_csv_dataset(d["path"], k=d["k"])
    else:
        raise ConfigError(f"data.kind must be gaussians, spirals or csv, not {d['kind']!r}")
    return data.split(ds, d["train_fraction"], derive_seed(seed, "split"))


def build_protos(cfg, D=None):
    p = cfg["prototypes"]
    if p["path"] and D is None:
        return prototypes.load_prototypes(p["path"])
    return prototypes.build_prototypes(
        cfg["data"]["k"], D if D is not None else p["D"], derive_seed(cfg["seeds"]["seed"], "prototypes"),
        r=p["r"], mu=p["mu"], epochs=p["epochs"], metric=p["metric"], bound=p["bound"], eps=p["eps"])


def attack_config(cfg, name="attack", n_iters=None):
    a = cfg["attack"]
    scale = {"absolute": 1.0, "255": 1.0 / 255.0}.get(a["eps_units"])
    if scale is None:
        raise ConfigError("attack.eps_units must be 'absolute' or '255'")
    step = a["step_size"] * scale if a["step_size"] is not None else None
    return attacks.AttackConfig(
        metric=a["metric"], eps=a["eps"] * scale, step_size=step,
        n_iters=a["n_iters"] if n_iters is None else n_iters, restarts=a["restarts"],
        init=a["init"], surrogate=a["surrogate"],
        seed=derive_seed(cfg["seeds"]["seed"], name))


def train_config(cfg, protos):
    t, seed = cfg["training"], cfg["seeds"]["seed"]
    if t["schedule"] == "cyclical":
        schedule = training.Cyclical(t["base_lr"], t["lr"], t["cycle_epochs"])
    elif t["schedule"] == "constant":
        schedule = training.Constant(t["lr"])
    elif t["schedule"] == "multistep":
        schedule = training.MultiStep(t["lr"], tuple(t["decay_epochs"]), t["decay_factor"])
    else:
        raise ConfigError("training.schedule must be cyclical, constant or multistep")

    def simple(name):
        if name == "repulsive":
            return training.Repulsive(protos, t["loss_mode"])
        if name == "softmax":
            return training.Softmax()
        raise ConfigError(f"unknown regime {name!r}")

    if t["regime"] == "adversarial":
        regime = training.AdversarialTraining(
            t["alpha"], attack_config(cfg, "adversarial-training", n_iters=t["adv_iters"]),
            simple(t["base_regime"]))
    else:
        regime = simple(t["regime"])
    es = training.EarlyStop(t["early_stop"], t["eval_every"],
                            attack_config(cfg, "early-stop", n_iters=t["es_iters"]),
                            t["patience"], t["es_subset"], derive_seed(seed, "early-stop"))
    return training.TrainConfig(t["epochs"], t["batch_size"], schedule, t["momentum"], regime,
                                es, t["augment"], derive_seed(seed, "training"))


def uses_protos(cfg):
    t = cfg["training"]
    return t["regime"] == "repulsive" or (t["regime"] == "adversarial" and t["base_regime"] == "repulsive")


def fit(cfg, D=None):
    train_set, test_set = build_dataset(cfg)
    protos = build_protos(cfg, D) if uses_protos(cfg) else None
    out_dim = protos.D if protos is not None else cfg["data"]["k"]
    dims = [train_set.dim, *cfg["model"]["hidden"], out_dim]
    net = model_mod.Mlp.init(dims, seed=derive_seed(cfg["seeds"]["seed"], "model"))
    trained, history = training.train(net, train_set, test_set, train_config(cfg, protos))
    return trained, history, protos, test_set


def load_target_model(cfg):
    path = cfg["model"]["path"]
    if not path:
        raise ConfigError("model.path is required for this command")
    return model_mod.load_model(path)


# -- CSV helpers -----------------------------------------------------------

def rows_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_outputs(out_dir, files, parser):
    """Atomically write ``{name: text}`` plus the resolved config into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    parser.write(buf)
    files = dict(files)
    files["resolved_config.ini"] = buf.getvalue()
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out)
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, out / name))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, dest in staged:
        os.replace(tmp, dest)
    return [dest for _, dest in staged]


# -- commands --------------------------------------------------------------

def cmd_protos_gen(cfg):
    protos = build_protos(cfg)
    stats = protos.stats or prototypes.separation_stats(protos)
    return {"protos.csv": prototypes.format_prototypes(protos),
            "protos_stats.csv": rows_csv(["stat", "value"], stats.as_rows())}


def cmd_protos_stats(cfg):
    if not cfg["prototypes"]["path"]:
        raise ConfigError("protos stats needs prototypes.path")
    protos = prototypes.load_prototypes(cfg["prototypes"]["path"])
    stats = prototypes.separation_stats(protos)
    return {"protos_stats.csv": rows_csv(["stat", "value"], stats.as_rows())}


def cmd_train(cfg):
    trained, history, protos, test_set = fit(cfg)
    files = {"model.txt": model_mod.format_model(trained),
             "history.csv": history.to_csv(),
             "summary.csv": rows_csv(["metric", "value"], [
                 ("natural_acc", evaluation.accuracy(trained, test_set)),
                 ("best_epoch", history.best_epoch),
                 ("best_robust_acc", "" if history.best_robust_acc is None
                  else history.best_robust_acc)])}
    if protos is not None:
        files["protos.csv"] = prototypes.format_prototypes(protos)
        files["enclosure.csv"] = evaluation.enclosure_stats(trained, test_set).to_csv()
    return files


def cmd_attack(cfg):
    net = load_target_model(cfg)
    _, test_set = build_dataset(cfg)
    acfg = attack_config(cfg)
    rob, res = evaluation.robust_accuracy(net, test_set, acfg)
    return {"adversarial.csv": attacks.adversarial_csv(res, test_set.y),
            "attack_summary.csv": rows_csv(["metric", "value"], [
                ("n", len(test_set)), ("eps", acfg.eps),
                ("natural_acc", evaluation.accuracy(net, test_set)), ("robust_acc", rob)])}


def cmd_curve(cfg):
    net = load_target_model(cfg)
    _, test_set = build_dataset(cfg)
    eps_list = cfg["evaluation"]["eps_list"]
    scale = 1.0 / 255.0 if cfg["attack"]["eps_units"] == "255" else 1.0
    curve = evaluation.robustness_curve(net, test_set, [e * scale for e in eps_list],
                                        attack_config(cfg))
    return {"curve.csv": curve.to_csv(), "curve.svg": curve.to_svg()}


def cmd_confusion(cfg):
    net = load_target_model(cfg)
    _, test_set = build_dataset(cfg)
    natural = evaluation.confusion_matrix(test_set.y, net.predict(test_set.X), test_set.k)
    adv, _ = evaluation.adv_confusion(net, test_set, attack_config(cfg))
    return {"confusion_natural.csv": natural.to_csv(),
            "confusion_adversarial.csv": adv.to_csv(),
            "confusion_adversarial_normalized.csv": adv.to_csv(normalized=True)}


def cmd_transfer(cfg):
    ev = cfg["evaluation"]
    if not ev["substitute"] or not ev["targets"]:
        raise ConfigError("transfer needs evaluation.substitute and evaluation.targets")
    sub = model_mod.load_model(ev["substitute"])
    targets = [model_mod.load_model(p) for p in ev["targets"]]
    _, test_set = build_dataset(cfg)
    acfg = attack_config(cfg)
    black, _ = evaluation.transfer_eval(sub, targets, test_set, acfg)
    rows = []
    for path, target, bb in zip(ev["targets"], targets, black):
        white, _ = evaluation.robust_accuracy(target, test_set, acfg)
        rows.append((path, evaluation.accuracy(target, test_set), white, bb))
    return {"transfer.csv": rows_csv(["target", "natural_acc", "white_box_acc", "black_box_acc"],
                                     rows)}


def cmd_sweep_dims(cfg):
    d_list = cfg["evaluation"]["d_list"] or [cfg["data"]["k"] * f for f in (1, 5, 10)]
    acfg = attack_config(cfg)
    rows = []
    for D in d_list:
        trained, _, protos, test_set = fit(cfg, D=D)
        rob, _ = evaluation.robust_accuracy(trained, test_set, acfg)
        rows.append((D, evaluation.accuracy(trained, test_set), rob, protos.stats.min_pairwise))
    return {"sweep.csv": rows_csv(["D", "natural_acc", "robust_acc", "min_separation"], rows)}


COMMANDS = {
    ("protos", "gen"): cmd_protos_gen,
    ("protos", "stats"): cmd_protos_stats,
    ("train",): cmd_train,
    ("attack",): cmd_attack,
    ("curve",): cmd_curve,
    ("confusion",): cmd_confusion,
    ("transfer",): cmd_transfer,
    ("sweep-dims",): cmd_sweep_dims,
}


def _add_common(p):
    p.add_argument("--config", type=Path, help="INI experiment config")
    p.add_argument("--seed", type=int, help="top-level seed (overrides seeds.seed)")
    p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    p.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")


def build_parser():
    parser = argparse.ArgumentParser(prog="reproto", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    protos = sub.add_parser("protos", help="generate or inspect prototype sets")
    psub = protos.add_subparsers(dest="action", required=True)
    for action in ("gen", "stats"):
        _add_common(psub.add_parser(action))
    for name in ("train", "attack", "curve", "confusion", "transfer", "sweep-dims"):
        _add_common(sub.add_parser(name))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    key = (args.command, args.action) if args.command == "protos" else (args.command,)
    try:
        cfg, parser = load_config(args.config, args.override, args.seed, args.out)
        files = COMMANDS[key](cfg)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"reproto: error: {exc}", file=sys.stderr)
        return 2
    for path in write_outputs(cfg["output"]["dir"], files, parser):
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
