"""Declarative network builders over the spherical layers.

A :class:`ModelSpec` is an ordered list of layer descriptors forming a small
DAG (skip connections reference earlier layers by name).  Building a
:class:`Model` from a spec allocates parameters from a seeded generator and
shape-checks every connection, so the same config always yields the same layer
list and parameter count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import healpix
from .errors import ConfigError, ContractError
from .nn import functional as F
from .nn import layers as L
from .nn.autodiff import Tensor
from .nn.checkpoint import read_checkpoint, write_checkpoint


@dataclass(frozen=True)
class LayerDesc:
    """One layer of a model DAG.

    ``inputs`` names earlier layers ("input" is the model input); parameterized
    kinds carry ``c_out``.
    """

    name: str
    kind: str
    inputs: tuple = ("prev",)
    c_out: int | None = None


@dataclass(frozen=True)
class ModelSpec:
    arch: str
    entry_level: int
    in_channels: int
    layers: tuple = field(default_factory=tuple)

    def layer_names(self):
        return [d.name for d in self.layers]


_PARAM_KINDS = {"sconv", "conv1x1", "unpool", "linear", "batchnorm"}


class Model:
    """Executable network instantiated from a :class:`ModelSpec`."""

    def __init__(self, spec: ModelSpec, seed: int = 0, dtype=np.float32):
        self.spec = spec
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self._layers: dict[str, L.Layer] = {}
        self._shapes = {"input": ("sphere", spec.entry_level, spec.in_channels)}
        seen = {"input"}
        prev = "input"
        for desc in spec.layers:
            if desc.name in seen:
                raise ConfigError(f"duplicate layer name {desc.name!r}")
            inputs = tuple(prev if ref == "prev" else ref for ref in desc.inputs)
            for ref in inputs:
                if ref not in seen:
                    raise ConfigError(f"layer {desc.name!r} references unknown {ref!r}")
            shapes = [self._shapes[ref] for ref in inputs]
            self._shapes[desc.name] = self._build_layer(desc, inputs, shapes, rng)
            self._resolved_inputs = getattr(self, "_resolved_inputs", {})
            self._resolved_inputs[desc.name] = inputs
            seen.add(desc.name)
            prev = desc.name
        if not spec.layers:
            raise ConfigError("model spec has no layers")
        self._output = spec.layers[-1].name

    def _build_layer(self, desc, inputs, shapes, rng):
        kind = desc.kind
        if kind in ("sconv", "conv1x1", "pool", "unpool", "batchnorm", "relu",
                    "global_mean", "flatten", "softmax"):
            if len(inputs) != 1:
                raise ConfigError(f"{kind} takes one input, got {inputs}")
        shape = shapes[0]

        if kind == "sconv":
            if shape[0] != "sphere":
                raise ContractError(f"{desc.name}: sconv needs a spherical input")
            _, level, c_in = shape
            self._layers[desc.name] = L.SphericalConv(level, c_in, desc.c_out, rng, self.dtype)
            return ("sphere", level, desc.c_out)
        if kind == "conv1x1":
            if shape[0] != "sphere":
                raise ContractError(f"{desc.name}: conv1x1 needs a spherical input")
            _, level, c_in = shape
            self._layers[desc.name] = L.Conv1x1(c_in, desc.c_out, rng, self.dtype)
            return ("sphere", level, desc.c_out)
        if kind == "pool":
            _, level, c = shape
            if level < 1:
                raise ContractError(f"{desc.name}: cannot pool below level 0")
            self._layers[desc.name] = L.MaxPool()
            return ("sphere", level - 1, c)
        if kind == "unpool":
            _, level, c_in = shape
            if level + 1 > healpix.LEVEL_CAP:
                raise ContractError(f"{desc.name}: unpool beyond the level cap")
            self._layers[desc.name] = L.SphericalUnpool(c_in, desc.c_out, rng, self.dtype)
            return ("sphere", level + 1, desc.c_out)
        if kind == "batchnorm":
            c = shape[-1]
            self._layers[desc.name] = L.BatchNorm(c, self.dtype)
            return shape
        if kind == "relu":
            self._layers[desc.name] = L.ReLU()
            return shape
        if kind == "softmax":
            self._layers[desc.name] = L.Softmax()
            return shape
        if kind == "flatten":
            if shape[0] != "sphere":
                raise ContractError(f"{desc.name}: flatten needs a spherical input")
            _, level, c = shape
            self._layers[desc.name] = L.Flatten()
            return ("flat", healpix.n_pixels(level) * c)
        if kind == "global_mean":
            if shape[0] != "sphere":
                raise ContractError(f"{desc.name}: global_mean needs a spherical input")
            self._layers[desc.name] = L.GlobalMean()
            return ("flat", shape[2])
        if kind == "linear":
            if shape[0] != "flat":
                raise ContractError(f"{desc.name}: linear needs a flat input")
            self._layers[desc.name] = L.Linear(shape[1], desc.c_out, rng, self.dtype)
            return ("flat", desc.c_out)
        if kind == "sum":
            if any(s != shape for s in shapes):
                raise ContractError(f"{desc.name}: sum inputs must share one shape, got {shapes}")
            return shape
        if kind == "concat":
            if shape[0] == "sphere":
                if any(s[0] != "sphere" or s[1] != shape[1] for s in shapes):
                    raise ContractError(f"{desc.name}: concat inputs must share a level")
                return ("sphere", shape[1], sum(s[2] for s in shapes))
            if any(s[0] != "flat" for s in shapes):
                raise ContractError(f"{desc.name}: concat inputs must all be flat")
            return ("flat", sum(s[1] for s in shapes))
        raise ConfigError(f"unknown layer kind {kind!r}")

    def output_shape(self):
        return self._shapes[self._output]

    def forward(self, x, train: bool = False) -> Tensor:
        """Run the DAG on a batch ``x`` of shape (B, n_pix, in_channels)."""
        x = np.asarray(x, dtype=self.dtype)
        want = healpix.n_pixels(self.spec.entry_level)
        if x.ndim != 3 or x.shape[1] != want or x.shape[2] != self.spec.in_channels:
            raise ContractError(
                f"input must be (B, {want}, {self.spec.in_channels}), got {x.shape}"
            )
        values = {"input": Tensor(x)}
        for desc in self.spec.layers:
            inputs = [values[ref] for ref in self._resolved_inputs[desc.name]]
            if desc.kind == "sum":
                out = inputs[0]
                for other in inputs[1:]:
                    out = F.add(out, other)
            elif desc.kind == "concat":
                out = F.concat(inputs, axis=-1)
            else:
                out = self._layers[desc.name](inputs[0], train=train)
            values[desc.name] = out
        return values[self._output]

    def params(self):
        out = []
        for desc in self.spec.layers:
            layer = self._layers.get(desc.name)
            if layer is not None:
                for pname, tensor in layer.params():
                    out.append((f"{desc.name}.{pname}", tensor))
        return out

    def count_params(self) -> int:
        return sum(t.size for _, t in self.params())

    def state_dict(self) -> dict:
        state = {name: t.data for name, t in self.params()}
        for desc in self.spec.layers:
            layer = self._layers.get(desc.name)
            if layer is not None:
                for bname, arr in layer.buffers():
                    state[f"{desc.name}.{bname}"] = arr
        return state

    def load_state_dict(self, state: dict) -> None:
        for name, t in self.params():
            if name not in state:
                raise ContractError(f"checkpoint missing parameter {name!r}")
            arr = np.asarray(state[name], dtype=self.dtype)
            if arr.shape != t.data.shape:
                raise ContractError(
                    f"parameter {name!r} shape {arr.shape} != model {t.data.shape}"
                )
            t.data = arr.copy()
        for desc in self.spec.layers:
            layer = self._layers.get(desc.name)
            if layer is not None:
                for bname, arr in layer.buffers():
                    key = f"{desc.name}.{bname}"
                    if key in state:
                        arr[...] = state[key]

    def save(self, path) -> None:
        write_checkpoint(path, self.state_dict())

    def load(self, path) -> None:
        self.load_state_dict(read_checkpoint(path))


# ---------------------------------------------------------------------------
# builders

SMNIST_DEFAULT_WIDTHS = (16, 24, 32, 48)
VGG11_STAGES = ((64,), (128,), (256, 256), (512, 512), (512, 512))
UNET_DECODER_WIDTHS = (512, 256, 128, 64, 32)


def build_smnist(entry_level: int = 4, widths=SMNIST_DEFAULT_WIDTHS,
                 num_classes: int = 10, in_channels: int = 1) -> ModelSpec:
    """Five-layer digit classifier: 4 x (conv-pool-BN-ReLU) then FC-softmax.

    Default widths land the trainable parameter count near 32k at entry
    level 4.
    """
    if entry_level < len(widths):
        raise ConfigError(f"entry level {entry_level} cannot support {len(widths)} pools")
    descs = []
    prev = "input"
    for i, w in enumerate(widths):
        descs += [
            LayerDesc(f"conv{i + 1}", "sconv", (prev,), w),
            LayerDesc(f"pool{i + 1}", "pool"),
            LayerDesc(f"bn{i + 1}", "batchnorm"),
            LayerDesc(f"relu{i + 1}", "relu"),
        ]
        prev = f"relu{i + 1}"
    descs += [
        LayerDesc("flatten", "flatten"),
        LayerDesc("fc", "linear", ("flatten",), num_classes),
    ]
    return ModelSpec("smnist", entry_level, in_channels, tuple(descs))


def _vgg_stage(descs, stage_idx, widths, prev, anti_rotation, last_stage):
    """Append one conv stage; returns the name feeding the stage's pool."""
    for j, w in enumerate(widths):
        is_prepool = j == len(widths) - 1
        base = f"s{stage_idx}c{j + 1}"
        descs += [
            LayerDesc(base, "sconv", (prev,), w),
            LayerDesc(f"{base}_bn", "batchnorm"),
            LayerDesc(f"{base}_relu", "relu"),
        ]
        main = f"{base}_relu"
        if anti_rotation and is_prepool:
            descs += [
                LayerDesc(f"{base}_rot", "conv1x1", (prev,), w),
                LayerDesc(f"{base}_rot_bn", "batchnorm"),
                LayerDesc(f"{base}_rot_relu", "relu"),
            ]
            if last_stage:
                descs.append(LayerDesc(f"{base}_cat", "concat", (main, f"{base}_rot_relu")))
                main = f"{base}_cat"
            else:
                descs.append(LayerDesc(f"{base}_sum", "sum", (main, f"{base}_rot_relu")))
                main = f"{base}_sum"
        prev = main
    return prev


def build_vgg11_spherical(num_classes: int = 40, anti_rotation: bool = False,
                          in_channels: int = 6, entry_level: int = 5,
                          fc_dim: int = 1024) -> ModelSpec:
    """VGG-11 conv stack on spherical layers; FC widths 1024.

    With ``anti_rotation`` every pre-pool 3x3 conv gains a parallel 1x1
    branch: branch outputs are summed into the trunk before each pool, and at
    the final stage the two feature streams are concatenated instead (doubling
    the pre-FC width).
    """
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    if entry_level < len(VGG11_STAGES):
        raise ConfigError(f"entry level {entry_level} cannot support 5 pools")
    descs = []
    prev = "input"
    for i, stage in enumerate(VGG11_STAGES):
        prev = _vgg_stage(descs, i + 1, stage, prev, anti_rotation,
                          last_stage=i == len(VGG11_STAGES) - 1)
        descs.append(LayerDesc(f"pool{i + 1}", "pool", (prev,)))
        prev = f"pool{i + 1}"
    descs += [
        LayerDesc("flatten", "flatten", (prev,)),
        LayerDesc("fc1", "linear", ("flatten",), fc_dim),
        LayerDesc("fc1_relu", "relu"),
        LayerDesc("fc2", "linear", ("fc1_relu",), fc_dim),
        LayerDesc("fc2_relu", "relu"),
        LayerDesc("fc3", "linear", ("fc2_relu",), num_classes),
    ]
    return ModelSpec("vgg11", entry_level, in_channels, tuple(descs))


def build_unet_spherical(num_classes: int = 13, in_channels: int = 4,
                         entry_level: int = 5) -> ModelSpec:
    """Encoder-decoder segmenter: the VGG-11 encoder (top width 512) plus a
    skip-connected decoder of unpool stages back to the entry level."""
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    if entry_level < len(VGG11_STAGES):
        raise ConfigError(f"entry level {entry_level} cannot support 5 pools")
    descs = []
    prev = "input"
    skips = []
    for i, stage in enumerate(VGG11_STAGES):
        prev = _vgg_stage(descs, i + 1, stage, prev, anti_rotation=False, last_stage=False)
        skips.append(prev)
        descs.append(LayerDesc(f"pool{i + 1}", "pool", (prev,)))
        prev = f"pool{i + 1}"

    for i, w in enumerate(UNET_DECODER_WIDTHS):
        skip = skips[-(i + 1)]
        descs += [
            LayerDesc(f"up{i + 1}", "unpool", (prev,), w),
            LayerDesc(f"up{i + 1}_cat", "concat", (f"up{i + 1}", skip)),
            LayerDesc(f"d{i + 1}", "sconv", (f"up{i + 1}_cat",), w),
            LayerDesc(f"d{i + 1}_bn", "batchnorm"),
            LayerDesc(f"d{i + 1}_relu", "relu"),
        ]
        prev = f"d{i + 1}_relu"
    descs.append(LayerDesc("head", "conv1x1", (prev,), num_classes))
    return ModelSpec("unet", entry_level, in_channels, tuple(descs))


def build_pointwise_classifier(in_channels: int, num_classes: int,
                               entry_level: int = 5) -> ModelSpec:
    """Per-pixel linear classifier (a diagnostic baseline for segmentation)."""
    descs = (LayerDesc("head", "conv1x1", ("input",), num_classes),)
    return ModelSpec("pointwise", entry_level, in_channels, descs)


def build_rotation_probe(in_channels: int = 3, hidden: int = 16,
                         num_classes: int = 5, entry_level: int = 2) -> ModelSpec:
    """Classifier made only of per-pixel maps and a global mean, so its logits
    are invariant under any pixel permutation of the input."""
    descs = (
        LayerDesc("c1", "conv1x1", ("input",), hidden),
        LayerDesc("r1", "relu"),
        LayerDesc("c2", "conv1x1", ("r1",), hidden),
        LayerDesc("r2", "relu"),
        LayerDesc("gap", "global_mean", ("r2",)),
        LayerDesc("fc", "linear", ("gap",), num_classes),
    )
    return ModelSpec("rotation_probe", entry_level, in_channels, descs)


# ---------------------------------------------------------------------------
# config files (key=value text)

_BUILDERS = {
    "smnist": build_smnist,
    "vgg11": build_vgg11_spherical,
    "unet": build_unet_spherical,
    "pointwise": build_pointwise_classifier,
}


def spec_from_config(cfg: dict) -> ModelSpec:
    """Build a spec from a parsed config mapping (see :func:`load_model_config`)."""
    arch = cfg.get("arch")
    if arch not in _BUILDERS:
        raise ConfigError(f"unknown architecture {arch!r}; choose from {sorted(_BUILDERS)}")
    kwargs = {}
    if "entry_level" in cfg:
        kwargs["entry_level"] = int(cfg["entry_level"])
    if "num_classes" in cfg:
        kwargs["num_classes"] = int(cfg["num_classes"])
    if "in_channels" in cfg:
        kwargs["in_channels"] = int(cfg["in_channels"])
    if arch == "smnist" and "widths" in cfg:
        kwargs["widths"] = tuple(int(w) for w in str(cfg["widths"]).split(",") if w)
    if arch == "vgg11" and "anti_rotation" in cfg:
        kwargs["anti_rotation"] = str(cfg["anti_rotation"]).lower() in ("1", "true", "yes")
    if arch == "pointwise" and "in_channels" not in cfg:
        raise ConfigError("pointwise config requires in_channels")
    return _BUILDERS[arch](**kwargs)


def load_model_config(path) -> dict:
    """Parse a key=value model config file; '#' starts a comment."""
    cfg = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            cfg[key.strip()] = value.strip()
    return cfg


def save_model_config(path, cfg: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in cfg.items():
            fh.write(f"{key}={value}\n")
