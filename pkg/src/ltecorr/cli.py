"""Command-line surface: configuration, checkpoints, subcommands.

Config files are plain `key = value` lines under `[section]` headers
(sections: data, embed, lle, loss, train; `#` starts a comment).  Every
key has a typed default; `--set section.key=value` flags override file
values, and dedicated path flags override both.  The full grammar is
documented in the README.

Checkpoints are a custom little-endian binary layout:

    bytes 0-3   magic "LTEC"
    u32         format version (1)
    u32         completed epochs
    u32 k_graph, u32 out_dim, i64 seed, u32 n_layers, u32*n widths
    u32         parameter count
    per param   u16 name length, name (utf-8), u8 ndim, u64*ndim dims,
                f64*prod payload
    u8          optimizer-state flag
    if set      u64 step, then per param the m payload and v payload
                (shapes implied by the parameter)

load(save(x)) is byte-identical.
"""

from __future__ import annotations

import argparse
import configparser
import io
import os
import re
import struct
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import _kernels, correspond, embed_net, pointcloud, trainer
from .embed_net import EmbedConfig, EmbedParams
from .lle import lle_self_weights
from .losses import LossConfig
from .pointcloud import PointCloud, ShapePair
from .trainer import OptState, TrainConfig

MAGIC = b"LTEC"
VERSION = 1

# (section, key) -> (parser, default); parsers raise ValueError on bad input


def _int(s):
    return int(s)


def _float(s):
    return float(s)


def _int_list(s):
    return tuple(int(p) for p in str(s).split(",") if p.strip() != "")


def _str_list(s):
    return tuple(p.strip() for p in str(s).split(",") if p.strip() != "")


def _alpha(s):
    if str(s).strip().lower() == "auto":
        return None
    return float(s)


def _text(s):
    return str(s).strip()


SCHEMA = {
    ("data", "corpus_dir"): (_text, "corpus"),
    ("data", "n_pairs"): (_int, 100),
    ("data", "n_points"): (_int, 128),
    ("data", "shapes"): (_str_list, ("sphere", "torus")),
    ("data", "warp"): (_float, 0.15),
    ("data", "noise"): (_float, 0.0),
    ("data", "seed"): (_int, 0),
    ("embed", "k_graph"): (_int, 10),
    ("embed", "layer_dims"): (_int_list, (64, 64, 64)),
    ("embed", "out_dim"): (_int, 64),
    ("embed", "seed"): (_int, 0),
    ("lle", "k"): (_int, 10),
    ("lle", "gamma"): (_float, 1.0),
    ("loss", "sigma"): (_float, 0.01),
    ("loss", "lambda_cross"): (_float, 1.0),
    ("loss", "lambda_self"): (_float, 1.0),
    ("loss", "lambda_reg"): (_float, 10.0),
    ("loss", "alpha"): (_alpha, None),
    ("loss", "divergence"): (_text, "cs"),
    ("loss", "k_map"): (_int, 10),
    ("train", "lr0"): (_float, 3e-4),
    ("train", "beta1"): (_float, 0.9),
    ("train", "beta2"): (_float, 0.999),
    ("train", "weight_decay"): (_float, 5e-4),
    ("train", "epochs"): (_int, 30),
    ("train", "warmup_epochs"): (_int, 3),
    ("train", "batch_size"): (_int, 4),
    ("train", "seed"): (_int, 0),
}


@dataclass
class RunConfig:
    """Merged, validated settings plus command file paths."""

    values: Dict[Tuple[str, str], object]
    # path arguments supplied by command flags
    out: Optional[str] = None
    checkpoint: Optional[str] = None
    resume: Optional[str] = None
    src: Optional[str] = None
    tgt: Optional[str] = None
    map_path: Optional[str] = None
    corr: Optional[str] = None
    loss_csv: Optional[str] = None
    out_prefix: Optional[str] = None
    eval_corpus: Optional[str] = None

    def __getitem__(self, key):
        return self.values[key]

    def embed_config(self) -> EmbedConfig:
        return EmbedConfig(
            k_graph=self[("embed", "k_graph")],
            layer_dims=self[("embed", "layer_dims")],
            out_dim=self[("embed", "out_dim")],
            seed=self[("embed", "seed")],
        )

    def loss_config(self, **overrides) -> LossConfig:
        kw = dict(
            sigma=self[("loss", "sigma")],
            lambda_cross=self[("loss", "lambda_cross")],
            lambda_self=self[("loss", "lambda_self")],
            lambda_reg=self[("loss", "lambda_reg")],
            alpha=self[("loss", "alpha")],
            divergence=self[("loss", "divergence")],
            k_map=self[("loss", "k_map")],
        )
        kw.update(overrides)
        return LossConfig(**kw)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr0=self[("train", "lr0")],
            betas=(self[("train", "beta1")], self[("train", "beta2")]),
            weight_decay=self[("train", "weight_decay")],
            epochs=self[("train", "epochs")],
            warmup_epochs=self[("train", "warmup_epochs")],
            batch_size=self[("train", "batch_size")],
            seed=self[("train", "seed")],
        )

    def validate(self):
        """Build every sub-config once so bad values fail before work starts."""
        self.embed_config()
        self.loss_config()
        self.train_config()
        for shape in self[("data", "shapes")]:
            if shape not in pointcloud.BASE_SHAPES:
                raise ValueError(f"config: unknown shape {shape!r} in data.shapes")
        if not self[("data", "shapes")]:
            raise ValueError("config: data.shapes is empty")
        if self[("data", "n_pairs")] < 1:
            raise ValueError("config: data.n_pairs must be >= 1")
        if self[("data", "noise")] < 0:
            raise ValueError("config: data.noise must be >= 0")
        if self[("lle", "k")] < 1:
            raise ValueError("config: lle.k must be >= 1")
        if self[("lle", "gamma")] < 0:
            raise ValueError("config: lle.gamma must be >= 0")


def load_run_config(config_path=None, sets=(), **paths) -> RunConfig:
    values = {key: default for key, (_, default) in SCHEMA.items()}
    if config_path is not None:
        values.update(_parse_config_file(config_path))
    for item in sets:
        key, raw = _split_set(item)
        parser, _ = SCHEMA[key]
        try:
            values[key] = parser(raw)
        except ValueError:
            raise ValueError(f"config: bad value {raw!r} for {key[0]}.{key[1]}") from None
    cfg = RunConfig(values=values, **paths)
    cfg.validate()
    return cfg


def _parse_config_file(path):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ValueError(f"config: cannot read {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ValueError(f"config: {path}: {exc}") from None
    out = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            schema_key = (section, key)
            if schema_key not in SCHEMA:
                raise ValueError(f"config: unknown key {section}.{key} in {path}")
            value_parser, _ = SCHEMA[schema_key]
            try:
                out[schema_key] = value_parser(raw)
            except ValueError:
                raise ValueError(
                    f"config: bad value {raw!r} for {section}.{key} in {path}"
                ) from None
    return out


def _split_set(item):
    m = re.fullmatch(r"([a-z]+)\.([a-z0-9_]+)=(.*)", item.strip())
    if not m:
        raise ValueError(f"config: --set expects section.key=value, got {item!r}")
    key = (m.group(1), m.group(2))
    if key not in SCHEMA:
        raise ValueError(f"config: unknown key {key[0]}.{key[1]}")
    return key, m.group(3)


# ---------------------------------------------------------------------------
# checkpoint serialization


def save_checkpoint(path, params: EmbedParams, state: Optional[OptState], epoch):
    data = _checkpoint_bytes(params, state, epoch)
    with open(path, "wb") as fh:
        fh.write(data)


def _checkpoint_bytes(params: EmbedParams, state, epoch) -> bytes:
    cfg = params.config
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, int(epoch)))
    buf.write(struct.pack("<IIq", cfg.k_graph, cfg.out_dim, int(cfg.seed)))
    buf.write(struct.pack("<I", len(cfg.layer_dims)))
    buf.write(struct.pack(f"<{len(cfg.layer_dims)}I", *cfg.layer_dims))
    names = params.names()
    buf.write(struct.pack("<I", len(names)))
    for name in names:
        raw = name.encode("utf-8")
        arr = params.values[name]
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.astype("<f8").tobytes())
    if state is None:
        buf.write(struct.pack("<B", 0))
    else:
        buf.write(struct.pack("<B", 1))
        buf.write(struct.pack("<Q", int(state.step)))
        for m, v in zip(state.m, state.v):
            buf.write(m.astype("<f8").tobytes())
            buf.write(v.astype("<f8").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data, path):
        self._data = data
        self._path = path
        self._pos = 0

    def take(self, n):
        if self._pos + n > len(self._data):
            raise ValueError(f"checkpoint: {self._path}: truncated file")
        chunk = self._data[self._pos : self._pos + n]
        self._pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self):
        return self._pos == len(self._data)


def load_checkpoint(path):
    """Returns (EmbedParams, OptState or None, completed epochs)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ValueError(f"checkpoint: cannot read {path}: {exc.strerror}") from None
    r = _Reader(data, path)
    if r.take(4) != MAGIC:
        raise ValueError(f"checkpoint: {path}: bad magic tag")
    version, epoch = r.unpack("<II")
    if version != VERSION:
        raise ValueError(f"checkpoint: {path}: unsupported version {version}")
    k_graph, out_dim, seed = r.unpack("<IIq")
    (n_layers,) = r.unpack("<I")
    layer_dims = r.unpack(f"<{n_layers}I")
    config = EmbedConfig(
        k_graph=k_graph, layer_dims=layer_dims, out_dim=out_dim, seed=seed
    )
    (n_params,) = r.unpack("<I")
    values = {}
    for _ in range(n_params):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q")
        count = int(np.prod(shape)) if shape else 1
        payload = np.frombuffer(r.take(8 * count), dtype="<f8")
        values[name] = payload.reshape(shape).copy()
    params = EmbedParams(config, values)
    (has_state,) = r.unpack("<B")
    state = None
    if has_state:
        (step,) = r.unpack("<Q")
        ms, vs = [], []
        for arr in params.arrays():
            ms.append(
                np.frombuffer(r.take(8 * arr.size), dtype="<f8").reshape(arr.shape).copy()
            )
            vs.append(
                np.frombuffer(r.take(8 * arr.size), dtype="<f8").reshape(arr.shape).copy()
            )
        state = OptState(step=step, m=ms, v=vs)
    if not r.done():
        raise ValueError(f"checkpoint: {path}: trailing bytes")
    return params, state, epoch


# ---------------------------------------------------------------------------
# corpus helpers

_PAIR_RE = re.compile(r"pair_(\d+)_src\.xyz$")


def corpus_indices(corpus_dir):
    try:
        entries = os.listdir(corpus_dir)
    except OSError as exc:
        raise ValueError(
            f"corpus: cannot list {corpus_dir}: {exc.strerror}"
        ) from None
    found = sorted(int(m.group(1)) for e in entries if (m := _PAIR_RE.match(e)))
    if not found:
        raise ValueError(f"corpus: no pair_<idx>_src.xyz files in {corpus_dir}")
    return found


def load_corpus(corpus_dir) -> List[ShapePair]:
    pairs = []
    for idx in corpus_indices(corpus_dir):
        src = pointcloud.load_xyz(os.path.join(corpus_dir, f"pair_{idx}_src.xyz"))
        tgt = pointcloud.load_xyz(os.path.join(corpus_dir, f"pair_{idx}_tgt.xyz"))
        gt = pointcloud.load_map(os.path.join(corpus_dir, f"pair_{idx}.map"))
        pairs.append(ShapePair(source=src, target=tgt, gt_map=gt))
    return pairs


def _require_path(value, flag):
    if value is None:
        raise ValueError(f"missing required option {flag}")
    return value


def _load_pair(cfg) -> ShapePair:
    src = pointcloud.load_xyz(_require_path(cfg.src, "--src"))
    tgt = pointcloud.load_xyz(_require_path(cfg.tgt, "--tgt"))
    gt = pointcloud.load_map(_require_path(cfg.map_path, "--map"))
    return ShapePair(source=src, target=tgt, gt_map=gt)


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(cfg: RunConfig):
    out_dir = cfg.out or cfg[("data", "corpus_dir")]
    os.makedirs(out_dir, exist_ok=True)
    shapes = cfg[("data", "shapes")]
    n_pairs = cfg[("data", "n_pairs")]
    n_points = cfg[("data", "n_points")]
    warp = cfg[("data", "warp")]
    noise = cfg[("data", "noise")]
    seed = cfg[("data", "seed")]
    for idx in range(n_pairs):
        shape = shapes[idx % len(shapes)]
        pair = pointcloud.gen_pair(shape, n_points, warp, seed=[seed, idx])
        if noise > 0:
            pair = ShapePair(
                source=pointcloud.add_noise(pair.source, noise, seed=[seed, idx, 1]),
                target=pointcloud.add_noise(pair.target, noise, seed=[seed, idx, 2]),
                gt_map=pair.gt_map,
            )
        pointcloud.save_xyz(pair.source, os.path.join(out_dir, f"pair_{idx}_src.xyz"))
        pointcloud.save_xyz(pair.target, os.path.join(out_dir, f"pair_{idx}_tgt.xyz"))
        pointcloud.save_map(pair.gt_map, os.path.join(out_dir, f"pair_{idx}.map"))
    print(
        f"wrote {n_pairs} pairs ({n_points} points, shapes {','.join(shapes)}) "
        f"to {out_dir}"
    )
    return 0


def cmd_train(cfg: RunConfig):
    corpus_dir = cfg.out or cfg[("data", "corpus_dir")]
    pairs = load_corpus(corpus_dir)
    ckpt_path = _require_path(cfg.checkpoint, "--ckpt")
    embed_cfg = cfg.embed_config()
    train_cfg = cfg.train_config()
    params = state = None
    start_epoch = 0
    if cfg.resume:
        params, state, start_epoch = load_checkpoint(cfg.resume)
        if params.config != embed_cfg:
            raise ValueError(
                "train: checkpoint embed config does not match the run config"
            )
        if start_epoch >= train_cfg.epochs:
            raise ValueError(
                f"train: checkpoint already at epoch {start_epoch} of "
                f"{train_cfg.epochs}"
            )

    def on_epoch(epoch, p, s, mean_loss, lr):
        save_checkpoint(ckpt_path, p, s, epoch)

    result = trainer.train(
        pairs,
        embed_cfg,
        cfg.loss_config(),
        train_cfg,
        lle_k=cfg[("lle", "k")],
        gamma=cfg[("lle", "gamma")],
        params=params,
        state=state,
        start_epoch=start_epoch,
        on_epoch=on_epoch,
    )
    save_checkpoint(ckpt_path, result.params, result.state, train_cfg.epochs)
    if cfg.loss_csv:
        with open(cfg.loss_csv, "w", encoding="ascii") as fh:
            fh.write(trainer.history_csv(result.history))
    final = result.history[-1]
    print(
        f"trained {len(pairs)} pairs for epochs {start_epoch + 1}..{final[0]}; "
        f"final mean loss {final[1]:.6g}; checkpoint {ckpt_path}"
    )
    return 0


def _embeddings_for(cfg, pair_or_clouds):
    params, _, _ = load_checkpoint(_require_path(cfg.checkpoint, "--ckpt"))
    if isinstance(pair_or_clouds, ShapePair):
        clouds = (pair_or_clouds.source, pair_or_clouds.target)
    else:
        clouds = pair_or_clouds
    return params, [embed_net.embed(params, c) for c in clouds]


def cmd_match(cfg: RunConfig):
    src = pointcloud.load_xyz(_require_path(cfg.src, "--src"))
    tgt = pointcloud.load_xyz(_require_path(cfg.tgt, "--tgt"))
    _, (fx, fy) = _embeddings_for(cfg, (src, tgt))
    corr = correspond.match_nn(fx, fy)
    out = _require_path(cfg.out, "--out")
    correspond.save_correspondence(corr, out)
    print(f"matched {corr.n} points; wrote {out}")
    return 0


def cmd_eval(cfg: RunConfig):
    pair = _load_pair(cfg)
    if cfg.corr and cfg.checkpoint:
        raise ValueError("eval: give either --corr or --ckpt, not both")
    if cfg.corr:
        corr = correspond.load_correspondence(cfg.corr)
    else:
        _, (fx, fy) = _embeddings_for(cfg, pair)
        corr = correspond.match_nn(fx, fy)
    report = correspond.evaluate(corr, pair)
    out = _require_path(cfg.out, "--out")
    with open(out, "w", encoding="ascii") as fh:
        fh.write(correspond.report_csv(report))
    print(
        f"err {report.err:.6g}; acc(1%) {report.acc(0.01):.4f}; "
        f"acc(5%) {report.acc(0.05):.4f}; wrote {out}"
    )
    return 0


def cmd_xform_opt(cfg: RunConfig):
    pair = _load_pair(cfg)
    _, (fx, fy) = _embeddings_for(cfg, pair)
    prefix = _require_path(cfg.out_prefix, "--out-prefix")
    plain = correspond.evaluate(correspond.match_nn(fx, fy), pair)
    a = correspond.optimal_linear_transform(fx, fy, pair.gt_map)
    transformed = correspond.evaluate(
        correspond.match_with_transform(fx, fy, a), pair
    )
    for tag, report in (("plain", plain), ("transformed", transformed)):
        with open(f"{prefix}_{tag}.csv", "w", encoding="ascii") as fh:
            fh.write(correspond.report_csv(report))
    print(
        f"plain acc(1%) {plain.acc(0.01):.4f}; "
        f"transformed acc(1%) {transformed.acc(0.01):.4f}; "
        f"wrote {prefix}_plain.csv and {prefix}_transformed.csv"
    )
    return 0


ABLATION_GRID = (
    ("self_cs", "cs", 0.0, 1.0, 0.0),
    ("cross_cs", "cs", 1.0, 0.0, 0.0),
    ("both_cs", "cs", 1.0, 1.0, 0.0),
    ("full_cs", "cs", 1.0, 1.0, None),
    ("full_cd", "cd", 1.0, 1.0, None),
    ("full_emd", "emd", 1.0, 1.0, None),
)


def cmd_ablate(cfg: RunConfig):
    """Train the objective-component grid and score each variant.

    Rows: self-only, cross-only, both, both+smoothness, each with the
    kernel divergence; then the full objective with the Chamfer and
    assignment divergences.  `None` in the grid keeps the configured
    lambda_reg.
    """
    corpus_dir = cfg.out or cfg[("data", "corpus_dir")]
    pairs = load_corpus(corpus_dir)
    eval_pairs = load_corpus(cfg.eval_corpus) if cfg.eval_corpus else pairs
    embed_cfg = cfg.embed_config()
    train_cfg = cfg.train_config()
    rows = []
    for name, divergence, l_cross, l_self, l_reg in ABLATION_GRID:
        loss_cfg = cfg.loss_config(
            divergence=divergence,
            lambda_cross=l_cross,
            lambda_self=l_self,
            lambda_reg=cfg[("loss", "lambda_reg")] if l_reg is None else l_reg,
        )
        result = trainer.train(
            pairs,
            embed_cfg,
            loss_cfg,
            train_cfg,
            lle_k=cfg[("lle", "k")],
            gamma=cfg[("lle", "gamma")],
        )
        accs, errs = [], []
        for pair in eval_pairs:
            fx = embed_net.embed(result.params, pair.source)
            fy = embed_net.embed(result.params, pair.target)
            report = correspond.evaluate(correspond.match_nn(fx, fy), pair)
            accs.append(report.acc(0.01))
            errs.append(report.err)
        rows.append((name, divergence, loss_cfg, float(np.mean(accs)), float(np.mean(errs))))
        print(f"{name}: acc(1%) {rows[-1][3]:.4f}, err {rows[-1][4]:.6g}")
    lines = ["config,divergence,lambda_cross,lambda_self,lambda_reg,acc_1pct,err"]
    for name, divergence, loss_cfg, acc, err in rows:
        lines.append(
            f"{name},{divergence},{loss_cfg.lambda_cross:g},"
            f"{loss_cfg.lambda_self:g},{loss_cfg.lambda_reg:g},"
            f"{acc:.17g},{err:.17g}"
        )
    summary_path = _require_path(cfg.out_prefix, "--summary")
    with open(summary_path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {summary_path}")
    return 0


def cmd_lle_weights(cfg: RunConfig):
    src = pointcloud.load_xyz(_require_path(cfg.src, "--src"))
    k = cfg[("lle", "k")]
    gamma = cfg[("lle", "gamma")]
    if cfg.checkpoint:
        params, _, _ = load_checkpoint(cfg.checkpoint)
        weights = lle_self_weights(embed_net.embed(params, src), k, gamma)
        space = "embedding"
    else:
        weights = lle_self_weights(src, k, gamma)
        space = "coordinate"
    out = _require_path(cfg.out, "--out")
    idx = weights.neighbor_indices
    w = weights.weights.value
    header = (
        ["point"]
        + [f"neighbor_{j}" for j in range(k)]
        + [f"weight_{j}" for j in range(k)]
    )
    lines = [",".join(header)]
    for i in range(w.shape[0]):
        cells = [str(i)] + [str(int(j)) for j in idx[i]] + [
            f"{x:.17g}" for x in w[i]
        ]
        lines.append(",".join(cells))
    with open(out, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {space}-space weights for {w.shape[0]} points to {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(sub):
    sub.add_argument("-c", "--config", help="config file path")
    sub.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable)",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ltecorr",
        description="Point-cloud correspondence by locally linear embedding "
        "transforms (kernel backend: %s)" % _kernels.backend_name(),
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-data", help="generate a synthetic pair corpus")
    _add_common(p)
    p.add_argument("--out", help="corpus directory (default data.corpus_dir)")
    p.set_defaults(func=cmd_gen_data)

    p = subs.add_parser("train", help="train an embedding on a corpus")
    _add_common(p)
    p.add_argument("--corpus", dest="out", help="corpus directory")
    p.add_argument("--ckpt", dest="checkpoint", required=True, help="checkpoint output path")
    p.add_argument("--loss-csv", dest="loss_csv", help="per-epoch loss log path")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("match", help="predict a correspondence for two clouds")
    _add_common(p)
    p.add_argument("--ckpt", dest="checkpoint", required=True)
    p.add_argument("--src", required=True, help="source .xyz")
    p.add_argument("--tgt", required=True, help="target .xyz")
    p.add_argument("--out", required=True, help="correspondence output file")
    p.set_defaults(func=cmd_match)

    p = subs.add_parser("eval", help="score a correspondence against ground truth")
    _add_common(p)
    p.add_argument("--ckpt", dest="checkpoint")
    p.add_argument("--corr", help="existing correspondence file to score")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--map", dest="map_path", required=True, help="ground-truth map file")
    p.add_argument("--out", required=True, help="report CSV path")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser(
        "xform-opt", help="evaluate with and without the optimal linear transform"
    )
    _add_common(p)
    p.add_argument("--ckpt", dest="checkpoint", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--map", dest="map_path", required=True)
    p.add_argument("--out-prefix", dest="out_prefix", required=True)
    p.set_defaults(func=cmd_xform_opt)

    p = subs.add_parser("ablate", help="train and score the objective-component grid")
    _add_common(p)
    p.add_argument("--corpus", dest="out", help="training corpus directory")
    p.add_argument("--eval-corpus", dest="eval_corpus", help="held-out corpus directory")
    p.add_argument("--summary", dest="out_prefix", required=True, help="summary CSV path")
    p.set_defaults(func=cmd_ablate)

    p = subs.add_parser("lle-weights", help="dump reconstruction weights for one cloud")
    _add_common(p)
    p.add_argument("--src", required=True)
    p.add_argument("--ckpt", dest="checkpoint", help="embed first when given")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lle_weights)

    return parser


_PATH_FIELDS = (
    "out",
    "checkpoint",
    "resume",
    "src",
    "tgt",
    "map_path",
    "corr",
    "loss_csv",
    "out_prefix",
    "eval_corpus",
)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        paths = {f: getattr(args, f, None) for f in _PATH_FIELDS}
        cfg = load_run_config(args.config, args.set, **paths)
        return args.func(cfg)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        message = str(exc).replace("\n", " ") or exc.__class__.__name__
        print(f"ERROR: {message}", file=sys.stderr)
        return 1


main = run


if __name__ == "__main__":
    sys.exit(run())
