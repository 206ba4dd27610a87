"""The model zoo: unimodal baselines, concat late fusion, and the three
attention-fusion wirings (attention as late-fusion operator, as an extra
early-extracted modality, and as a standalone early extractor).

Transcript/on-screen-text/audio encoders are three-FC stacks (ReLU + dropout
after each layer); the video encoder is an LSTM over the padded 100-frame
sequence followed by one FC layer. In the raw-embedding attention modes each
participating modality is linearly projected to a shared width so queries
and stacked keys agree, with the key/value stack laid out along the sequence
dimension (T, O, A contribute one row each, V one row per frame). Encoder
output widths are uniform, so late-fusion attention needs no re-projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import nn_core as nn
from .autodiff import Tensor, constant
from .embedding_store import MODALITIES

MODES = ("unimodal", "concat_lf", "cma_lf", "mm_hsd", "cma_s")

DEFAULT_INPUT_DIMS = {"T": 768, "O": 768, "A": 1024, "V": 768}


@dataclass(frozen=True)
class AttentionConfig:
    query: str
    keys: tuple

    def __post_init__(self):
        object.__setattr__(self, "keys", tuple(self.keys))
        if self.query not in MODALITIES:
            raise ValueError(f"unknown query modality {self.query!r}")
        if not self.keys:
            raise ValueError("attention needs at least one key modality")
        for k in self.keys:
            if k not in MODALITIES:
                raise ValueError(f"unknown key modality {k!r}")
        if len(set(self.keys)) != len(self.keys):
            raise ValueError("duplicate key modalities")
        if self.query in self.keys:
            raise ValueError("query modality cannot also be a key")

    @property
    def modalities(self):
        return (self.query,) + self.keys


@dataclass
class ModelConfig:
    mode: str
    active_modalities: tuple = ("T", "O", "A", "V")
    attention: AttentionConfig | None = None
    cma_key_subset: tuple | None = None  # restricts attention keys, encoders untouched
    text_fc: tuple = (128, 64, 64)
    audio_fc: tuple = (128, 64, 64)
    lstm_hidden: int = 300
    video_fc_out: int = 64
    d_model: int = 768
    cma_s_ff: int = 128
    dropout: float = 0.3
    input_dims: dict = field(default_factory=lambda: dict(DEFAULT_INPUT_DIMS))
    video_frames: int = 100
    proj_init_gain: float = 1.0

    def __post_init__(self):
        self.active_modalities = tuple(self.active_modalities)
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        seen = set()
        for m in self.active_modalities:
            if m not in MODALITIES:
                raise ValueError(f"unknown modality {m!r}")
            if m in seen:
                raise ValueError(f"duplicate active modality {m!r}")
            seen.add(m)
        if not self.active_modalities:
            raise ValueError("need at least one active modality")
        if self.mode == "unimodal":
            if len(self.active_modalities) != 1:
                raise ValueError("unimodal mode takes exactly one active modality")
        if self.mode in ("cma_lf", "mm_hsd", "cma_s"):
            if self.attention is None:
                raise ValueError(f"mode {self.mode!r} requires an attention config")
            extra = set(self.attention.modalities) - set(self.active_modalities)
            if extra:
                raise ValueError(f"attention uses inactive modalities {sorted(extra)}")
        if self.cma_key_subset is not None:
            self.cma_key_subset = tuple(self.cma_key_subset)
            if self.attention is None:
                raise ValueError("cma_key_subset without an attention config")
            bad = set(self.cma_key_subset) - set(self.attention.keys)
            if bad:
                raise ValueError(f"cma_key_subset not within attention keys: {sorted(bad)}")
            if not self.cma_key_subset:
                raise ValueError("cma_key_subset must keep at least one key")

    def ordered_active(self):
        return tuple(m for m in MODALITIES if m in self.active_modalities)

    def effective_keys(self):
        """Attention key order after the exclusion-ablation filter."""
        keys = self.attention.keys
        if self.cma_key_subset is not None:
            keys = tuple(k for k in keys if k in self.cma_key_subset)
        return keys

    def encoder_out_width(self, m: str) -> int:
        if m in ("T", "O"):
            return self.text_fc[-1]
        if m == "A":
            return self.audio_fc[-1]
        return self.video_fc_out

    def uses_encoders(self) -> bool:
        return self.mode in ("unimodal", "concat_lf", "cma_lf", "mm_hsd")

    def uses_raw_cma(self) -> bool:
        return self.mode in ("mm_hsd", "cma_s")

    def cma_participants(self):
        return (self.attention.query,) + self.effective_keys()

    def head_in_width(self) -> int:
        enc = sum(self.encoder_out_width(m) for m in self.ordered_active())
        if self.mode == "unimodal":
            return self.encoder_out_width(self.active_modalities[0])
        if self.mode == "concat_lf":
            return enc
        if self.mode == "cma_lf":
            return self.encoder_out_width(self.attention.query)
        if self.mode == "mm_hsd":
            return enc + self.d_model
        return self.cma_s_ff  # cma_s

    def to_dict(self):
        doc = asdict(self)
        if self.attention is not None:
            doc["attention"] = {"query": self.attention.query, "keys": list(self.attention.keys)}
        return doc

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        att = doc.get("attention")
        if att is not None:
            doc["attention"] = AttentionConfig(query=att["query"], keys=tuple(att["keys"]))
        for key in ("active_modalities", "text_fc", "audio_fc", "cma_key_subset"):
            if doc.get(key) is not None:
                doc[key] = tuple(doc[key])
        return cls(**doc)


@dataclass
class Model:
    config: ModelConfig
    params: nn.ParameterSet

    def astype(self, dtype) -> "Model":
        return Model(config=self.config, params=self.params.astype(dtype))


def _kaiming_uniform(rng, fan_in, fan_out, gain=1.0):
    limit = gain * np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(np.float32)


def _init_fc_stack(params, rng, prefix, d_in, widths):
    for i, w in enumerate(widths):
        params.add(f"{prefix}.fc{i}.W", _kaiming_uniform(rng, d_in, w))
        params.add(f"{prefix}.fc{i}.b", np.zeros(w, dtype=np.float32))
        d_in = w


def _init_lstm(params, rng, prefix, d_in, hidden):
    limit = 1.0 / np.sqrt(hidden)
    params.add(
        f"{prefix}.Wx", rng.uniform(-limit, limit, size=(d_in, 4 * hidden)).astype(np.float32)
    )
    params.add(
        f"{prefix}.Wh", rng.uniform(-limit, limit, size=(hidden, 4 * hidden)).astype(np.float32)
    )
    b = np.zeros(4 * hidden, dtype=np.float32)
    b[hidden : 2 * hidden] = 1.0  # forget gate bias
    params.add(f"{prefix}.b", b)


def build_model(config: ModelConfig, seed: int = 0) -> Model:
    """Allocate and initialize the trainable parameters for one wiring."""
    rng = np.random.default_rng(seed)
    params = nn.ParameterSet()

    if config.uses_encoders():
        for m in config.ordered_active():
            if m in ("T", "O"):
                _init_fc_stack(params, rng, f"enc.{m}", config.input_dims[m], config.text_fc)
            elif m == "A":
                _init_fc_stack(params, rng, f"enc.{m}", config.input_dims[m], config.audio_fc)
            else:
                _init_lstm(params, rng, "enc.V.lstm", config.input_dims["V"], config.lstm_hidden)
                params.add(
                    "enc.V.fc.W",
                    _kaiming_uniform(rng, config.lstm_hidden, config.video_fc_out),
                )
                params.add("enc.V.fc.b", np.zeros(config.video_fc_out, dtype=np.float32))

    if config.uses_raw_cma():
        for m in config.cma_participants():
            params.add(
                f"cma.proj.{m}.W",
                _kaiming_uniform(rng, config.input_dims[m], config.d_model,
                                 gain=config.proj_init_gain),
            )
            params.add(f"cma.proj.{m}.b", np.zeros(config.d_model, dtype=np.float32))

    if config.mode == "cma_s":
        params.add("ff.W", _kaiming_uniform(rng, config.d_model, config.cma_s_ff))
        params.add("ff.b", np.zeros(config.cma_s_ff, dtype=np.float32))

    if config.mode == "cma_lf":
        widths = {config.encoder_out_width(m) for m in config.attention.modalities}
        if len(widths) != 1:
            raise ValueError(
                "late-fusion attention needs equal encoder output widths, got "
                f"{sorted(widths)}"
            )

    params.add("head.W", _kaiming_uniform(rng, config.head_in_width(), 2))
    params.add("head.b", np.zeros(2, dtype=np.float32))
    return Model(config=config, params=params)


def param_count(model: Model) -> int:
    return model.params.n_params


def _check_batch(config, batch):
    need = set(config.ordered_active())
    if config.uses_raw_cma():
        need |= set(config.cma_participants())
    missing = need - set(batch)
    if missing:
        raise KeyError(f"batch is missing required modalities {sorted(missing)}")
    sizes = {np.asarray(batch[m]).shape[0] for m in need}
    if len(sizes) != 1:
        raise ValueError(f"inconsistent batch sizes {sorted(sizes)}")
    return need


def encode_modality(kind, emb, params, config, mode="eval", rng=None) -> Tensor:
    """One modality's encoder: FC stack for T/O/A, LSTM+FC for V.

    ``emb`` is (B, d) for T/O/A and (B, frames, d) for V (already padded).
    Returns a (B, width) feature tensor.
    """
    dt = params["head.W"].data.dtype if "head.W" in params else np.float32
    x = np.asarray(emb, dtype=dt)
    if kind == "V":
        if x.ndim == 2:
            x = x[None]
        if x.shape[1] != config.video_frames:
            raise ValueError(
                f"video input has {x.shape[1]} frames, expected {config.video_frames} (pad first)"
            )
        h = nn.lstm_forward(x, params["enc.V.lstm.Wx"], params["enc.V.lstm.Wh"],
                            params["enc.V.lstm.b"])
        out = nn.linear_forward(h, params["enc.V.fc.W"], params["enc.V.fc.b"])
        return nn.dropout_apply(ad.relu(out), config.dropout, mode, rng)
    if x.ndim != 2 or x.shape[1] != config.input_dims[kind]:
        raise ValueError(f"bad {kind} input shape {x.shape}")
    t = constant(x)
    n_layers = len(config.text_fc if kind in ("T", "O") else config.audio_fc)
    for i in range(n_layers):
        t = nn.linear_forward(t, params[f"enc.{kind}.fc{i}.W"], params[f"enc.{kind}.fc{i}.b"])
        t = nn.dropout_apply(ad.relu(t), config.dropout, mode, rng)
    return t


def _project_raw(model, batch, modality, dt):
    """Project a modality's raw embeddings to d_model, batched.

    Returns (tensor, rows_per_sample): (B, d_model) for T/O/A and
    (B*frames, d_model) for V, frames-major within each sample.
    """
    params = model.params
    x = np.asarray(batch[modality], dtype=dt)
    W = params[f"cma.proj.{modality}.W"]
    b = params[f"cma.proj.{modality}.b"]
    if modality == "V":
        B, frames, d = x.shape
        flat = constant(np.ascontiguousarray(x.reshape(B * frames, d)))
        return nn.linear_forward(flat, W, b), frames
    return nn.linear_forward(constant(x), W, b), 1


def _raw_cma_output(model, batch, mode, rng, dt):
    """Attention over raw projected embeddings; returns (B, d_model)."""
    config = model.config
    query_m = config.attention.query
    keys = config.effective_keys()
    projected = {m: _project_raw(model, batch, m, dt) for m in (query_m,) + keys}
    B = np.asarray(batch[query_m]).shape[0]

    outputs = []
    for i in range(B):
        key_rows = []
        for m in keys:
            t, rows = projected[m]
            key_rows.append(ad.slice_rows(t, i * rows, (i + 1) * rows))
        K = key_rows[0] if len(key_rows) == 1 else ad.concat_rows(key_rows)
        qt, q_rows = projected[query_m]
        q = ad.slice_rows(qt, i * q_rows, (i + 1) * q_rows)
        out, _ = nn.cma_forward(q, K, K)  # key and value stacks are identical
        if q_rows > 1:
            out = ad.mean_rows(out)  # fixed-width vector for fusion
        outputs.append(out)
    return outputs[0] if B == 1 else ad.concat_rows(outputs)


def forward(model: Model, batch, mode: str = "eval", rng=None) -> Tensor:
    """Run one wiring over a batch dict of raw (padded) modality arrays.

    Returns the (B, 2) logits tensor; prediction is the row argmax.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    config = model.config
    params = model.params
    _check_batch(config, batch)
    dt = params["head.W"].data.dtype

    feats = []
    if config.uses_encoders():
        for m in config.ordered_active():
            feats.append(encode_modality(m, batch[m], params, config, mode, rng))

    if config.mode in ("unimodal", "concat_lf"):
        head_in = feats[0] if len(feats) == 1 else ad.concat_cols(feats)
    elif config.mode == "cma_lf":
        by_mod = dict(zip(config.ordered_active(), feats))
        keys = config.effective_keys()
        B = feats[0].shape[0]
        outs = []
        for i in range(B):
            rows = [ad.slice_rows(by_mod[m], i, i + 1) for m in keys]
            K = rows[0] if len(rows) == 1 else ad.concat_rows(rows)
            q = ad.slice_rows(by_mod[config.attention.query], i, i + 1)
            out, _ = nn.cma_forward(q, K, K)
            outs.append(out)
        head_in = outs[0] if B == 1 else ad.concat_rows(outs)
    elif config.mode == "mm_hsd":
        cma_out = _raw_cma_output(model, batch, mode, rng, dt)
        head_in = ad.concat_cols(feats + [cma_out])
    else:  # cma_s
        cma_out = _raw_cma_output(model, batch, mode, rng, dt)
        ff = nn.linear_forward(cma_out, params["ff.W"], params["ff.b"])
        head_in = nn.dropout_apply(ad.relu(ff), config.dropout, mode, rng)

    return nn.linear_forward(head_in, params["head.W"], params["head.b"])


def predict(model: Model, batch) -> np.ndarray:
    with nn.no_grad():
        logits = forward(model, batch, mode="eval")
    return logits.data.argmax(axis=1)
