"""The program-by-example network.

Four components, all parameters namespaced by component:

* ``encoder/``: character embeddings, left/right context LSTMs, element-wise
  max of the two contexts concatenated with the raw embedding and projected
  to c_k, then a stacked bidirectional summarizer whose final states are
  merged into the string embedding s.  Shared by input and output strings.
* ``analyzer/``: two dense+tanh layers mapping [s_I; s_O] to t.
* ``generator/``: per step, f_t and a_r,t from [t; h_{t-1}], attention over
  the input and output c_k (separate parameters), refined a_t, history h_t.
* ``selector/``: function logits U_f f_t, and an LSTM that unrolls a_t into
  M argument embeddings, each mapped to argument logits by U_a.

Gaussian noise is added to t and to every a_t in training mode only.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .dsl.symbols import CHARSET, MAX_ARGS, MAX_STEPS, MAX_STRING_LEN, Arg, Func
from .nn import tensor as T
from .nn.optim import glorot_uniform
from .nn.tensor import Tensor

N_FUNCS = len(Func)
N_ARGS = len(Arg)
N_POSITIONS = MAX_STEPS * (1 + MAX_ARGS)
UNKNOWN_CHAR = len(CHARSET)
_CHAR_ID = {ch: i for i, ch in enumerate(CHARSET)}


@dataclass(frozen=True)
class ModelDims:
    raw_embed: int = 8  # E
    context: int = 64  # C
    char_embed: int = 64  # width of c_k
    summarizer: int = 128  # per direction
    summarizer_layers: int = 2
    string_embed: int = 256  # S
    transform: int = 256  # T_dim; equals history because h_0 = t
    history: int = 256  # H
    func_embed: int = 16  # F
    arg_embed: int = 64  # A
    attention: int = 64
    decoder_hidden: int = 64  # argument decoder state; A by default
    vocab: int = len(CHARSET) + 1
    n_funcs: int = N_FUNCS
    n_args: int = N_ARGS
    steps: int = MAX_STEPS
    args_per_step: int = MAX_ARGS

    def __post_init__(self):
        if self.transform != self.history:
            raise ValueError("transform and history widths must match (h_0 = t)")
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"dimension {f.name} must be positive")

    @classmethod
    def paper(cls) -> "ModelDims":
        return cls()

    @classmethod
    def toy(cls) -> "ModelDims":
        return cls(
            raw_embed=8, context=16, char_embed=16, summarizer=32, string_embed=64, transform=64,
            history=64, func_embed=8, arg_embed=16, attention=16, decoder_hidden=16,
        )

    @classmethod
    def tiny(cls, d: int = 4) -> "ModelDims":
        return cls(
            raw_embed=d, context=d, char_embed=d, summarizer=d, summarizer_layers=2, string_embed=d,
            transform=d, history=d, func_embed=d, arg_embed=d, attention=d, decoder_hidden=d,
        )

    @classmethod
    def preset(cls, name: str) -> "ModelDims":
        presets = {"paper": cls.paper, "toy": cls.toy, "tiny": cls.tiny}
        if name not in presets:
            raise ValueError(f"unknown scale {name!r}; choose from {sorted(presets)}")
        return presets[name]()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelDims":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def char_ids(s: str) -> list[int]:
    try:
        return [_CHAR_ID[ch] for ch in s]
    except KeyError as exc:
        raise ValueError(f"unsupported character {exc.args[0]!r}") from None


def batch_chars(strings: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Padded id matrix (B, L) and boolean mask (B, L)."""
    if not strings:
        raise ValueError("empty batch")
    lens = [len(s) for s in strings]
    for s, n in zip(strings, lens):
        if n == 0:
            raise ValueError("cannot encode an empty string")
        if n > MAX_STRING_LEN:
            raise ValueError(f"string longer than {MAX_STRING_LEN} characters: {s[:20]!r}...")
    width = max(lens)
    ids = np.full((len(strings), width), UNKNOWN_CHAR, dtype=np.int64)
    mask = np.zeros((len(strings), width), dtype=bool)
    for r, s in enumerate(strings):
        ids[r, : len(s)] = char_ids(s)
        mask[r, : len(s)] = True
    return ids, mask


@dataclass
class EncodedStrings:
    chars: Tensor  # c_k, (B, L, char_embed)
    mask: np.ndarray  # (B, L)
    string: Tensor  # s, (B, S)


@dataclass
class ForwardOutput:
    func_logits: list  # per step, (B, P)
    arg_logits: list  # per step, list of M tensors (B, Q)
    attention_in: list  # per step, (B, L_in) attention weights
    attention_out: list

    def position_logits(self) -> list[Tensor]:
        """30 logit tensors in encoding order: f1, a1.1..a1.5, f2, ..."""
        out = []
        for f, args in zip(self.func_logits, self.arg_logits):
            out.append(f)
            out.extend(args)
        return out

    def log_probs(self) -> list[np.ndarray]:
        return [T.log_softmax_np(t.data) for t in self.position_logits()]

    def probs(self) -> list[np.ndarray]:
        return [T.softmax_np(t.data) for t in self.position_logits()]


class NPBEModel:
    def __init__(self, dims: ModelDims, seed: int = 0, dtype=np.float32):
        self.dims = dims
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        self._init(rng)

    # ------------------------------------------------------------------ setup
    def _add(self, name: str, arr: np.ndarray):
        self.params[name] = T.parameter(arr.astype(self.dtype), name)

    def _dense(self, rng, name: str, n_in: int, n_out: int, bias: bool = True):
        self._add(f"{name}/W", glorot_uniform(rng, (n_in, n_out), self.dtype))
        if bias:
            self._add(f"{name}/b", np.zeros(n_out, dtype=self.dtype))

    def _lstm(self, rng, name: str, n_in: int, hid: int):
        self._add(f"{name}/W", glorot_uniform(rng, (n_in + hid, 4 * hid), self.dtype))
        b = np.zeros(4 * hid, dtype=self.dtype)
        b[hid:2 * hid] = 1.0  # forget gate
        self._add(f"{name}/b", b)

    def _init(self, rng):
        d = self.dims
        self._add("encoder/raw_embed", glorot_uniform(rng, (d.vocab, d.raw_embed), self.dtype))
        self._lstm(rng, "encoder/context_left", d.raw_embed, d.context)
        self._lstm(rng, "encoder/context_right", d.raw_embed, d.context)
        self._dense(rng, "encoder/char", d.context + d.raw_embed, d.char_embed)
        n_in = d.char_embed
        for layer in range(d.summarizer_layers):
            self._lstm(rng, f"encoder/summarizer{layer}_fwd", n_in, d.summarizer)
            self._lstm(rng, f"encoder/summarizer{layer}_bwd", n_in, d.summarizer)
            n_in = 2 * d.summarizer
        self._dense(rng, "encoder/string", 2 * d.summarizer, d.string_embed)

        self._dense(rng, "analyzer/layer1", 2 * d.string_embed, d.transform)
        self._dense(rng, "analyzer/layer2", d.transform, d.transform)

        self._dense(rng, "generator/func", d.transform + d.history, d.func_embed)
        self._dense(rng, "generator/args", d.transform + d.history, d.arg_embed)
        for side, (wc, wa, v) in (("input", ("W1", "W2", "v_I")), ("output", ("W3", "W4", "v_O"))):
            self._add(f"generator/attn_{side}/{wc}", glorot_uniform(rng, (d.char_embed, d.attention), self.dtype))
            self._add(f"generator/attn_{side}/{wa}", glorot_uniform(rng, (d.arg_embed, d.attention), self.dtype))
            self._add(f"generator/attn_{side}/{v}", glorot_uniform(rng, (d.attention, 1), self.dtype))
        self._dense(rng, "generator/refine", 2 * d.char_embed + d.arg_embed, d.arg_embed)
        self._dense(rng, "generator/history", d.func_embed + d.arg_embed + d.history, d.history)

        self._add("selector/U_f", glorot_uniform(rng, (d.func_embed, d.n_funcs), self.dtype))
        self._add("selector/U_a", glorot_uniform(rng, (d.decoder_hidden, d.n_args), self.dtype))
        self._lstm(rng, "selector/decoder", d.decoder_hidden + d.arg_embed, d.decoder_hidden)
        self._add("selector/start", rng.uniform(-0.1, 0.1, size=d.decoder_hidden).astype(self.dtype))

    def p(self, name: str) -> Tensor:
        return self.params[name]

    def parameter_list(self) -> list[Tensor]:
        return list(self.params.values())

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise T.ShapeError(f"{k}: checkpoint shape {v.shape} != model shape {self.params[k].shape}")
            self.params[k].data = v.astype(self.dtype).copy()

    def zero_logits(self):
        """Zero the selector projections so every distribution is uniform."""
        for k in ("selector/U_f", "selector/U_a"):
            self.params[k].data[...] = 0

    # ---------------------------------------------------------------- encoder
    def encode_strings(self, strings: Sequence[str]) -> EncodedStrings:
        ids, mask = batch_chars(strings)
        return self.encode_ids(ids, mask)

    def encode_ids(self, ids: np.ndarray, mask: np.ndarray) -> EncodedStrings:
        d = self.dims
        p = self.p
        e = T.embedding(ids, p("encoder/raw_embed"))
        left = T.lstm_sequence(e, p("encoder/context_left/W"), p("encoder/context_left/b"), mask)
        right = T.lstm_sequence(e, p("encoder/context_right/W"), p("encoder/context_right/b"), mask, reverse=True)
        chars = T.tanh(T.dense(T.concat([T.elem_max(left, right), e]), p("encoder/char/W"), p("encoder/char/b")))
        x = chars
        for layer in range(d.summarizer_layers):
            fw = T.lstm_sequence(x, p(f"encoder/summarizer{layer}_fwd/W"), p(f"encoder/summarizer{layer}_fwd/b"), mask)
            bw = T.lstm_sequence(
                x, p(f"encoder/summarizer{layer}_bwd/W"), p(f"encoder/summarizer{layer}_bwd/b"), mask, reverse=True
            )
            x = T.concat([fw, bw])
        top_f = T.take(fw, fw.shape[1] - 1, axis=1)
        top_b = T.take(bw, 0, axis=1)
        s = T.tanh(T.dense(T.concat([top_f, top_b]), p("encoder/string/W"), p("encoder/string/b")))
        return EncodedStrings(chars, mask, s)

    # --------------------------------------------------------------- analyzer
    def analyze(self, s_in: Tensor, s_out: Tensor) -> Tensor:
        p = self.p
        z = T.tanh(T.dense(T.concat([s_in, s_out]), p("analyzer/layer1/W"), p("analyzer/layer1/b")))
        return T.tanh(T.dense(z, p("analyzer/layer2/W"), p("analyzer/layer2/b")))

    # -------------------------------------------------------------- generator
    def _attend(self, keys: Tensor, enc: EncodedStrings, a_r: Tensor, wa: Tensor, v: Tensor):
        q = T.matmul(a_r, wa)
        u = T.tanh(T.add(keys, T.expand(q, 1, keys.shape[1])))
        scores = T.reshape(T.matmul(u, v), keys.shape[:2])
        weights = T.softmax(scores, enc.mask)
        return T.weighted_sum(weights, enc.chars), weights

    def generate_step(self, t: Tensor, h: Tensor, enc_in: EncodedStrings, enc_out: EncodedStrings, keys_in, keys_out,
                      noise: float = 0.0, rng=None, training: bool = False):
        p = self.p
        th = T.concat([t, h])
        f = T.tanh(T.dense(th, p("generator/func/W"), p("generator/func/b")))
        a_r = T.tanh(T.dense(th, p("generator/args/W"), p("generator/args/b")))
        ctx_in, w_in = self._attend(keys_in, enc_in, a_r, p("generator/attn_input/W2"), p("generator/attn_input/v_I"))
        ctx_out, w_out = self._attend(
            keys_out, enc_out, a_r, p("generator/attn_output/W4"), p("generator/attn_output/v_O")
        )
        a = T.tanh(T.dense(T.concat([ctx_in, a_r, ctx_out]), p("generator/refine/W"), p("generator/refine/b")))
        a = T.add_gaussian_noise(a, noise, rng, training)
        h_new = T.tanh(T.dense(T.concat([f, a, h]), p("generator/history/W"), p("generator/history/b")))
        return f, a, h_new, w_in, w_out

    # --------------------------------------------------------------- selector
    def select_symbols(self, f: Tensor, a: Tensor) -> tuple[Tensor, list[Tensor]]:
        d = self.dims
        p = self.p
        func_logits = T.matmul(f, p("selector/U_f"))
        bsz = f.shape[0]
        state = T.zero_state(bsz, d.decoder_hidden, self.dtype)
        prev = T.expand(p("selector/start"), 0, bsz)
        arg_logits = []
        for _ in range(d.args_per_step):
            state = T.lstm_cell(T.concat([prev, a]), state.h, state.c, p("selector/decoder/W"), p("selector/decoder/b"))
            prev = state.h
            arg_logits.append(T.matmul(prev, p("selector/U_a")))
        return func_logits, arg_logits

    # ---------------------------------------------------------------- forward
    def forward(
        self,
        inputs: Sequence[str],
        outputs: Sequence[str],
        training: bool = False,
        noise: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> ForwardOutput:
        if len(inputs) != len(outputs):
            raise ValueError("inputs and outputs differ in length")
        n = len(inputs)
        # one encoder pass over both strings; rows are independent, so this
        # equals encoding them separately
        enc = self.encode_strings(list(inputs) + list(outputs))
        enc_in, enc_out = _split_rows(enc, n)
        t = self.analyze(enc_in.string, enc_out.string)
        t = T.add_gaussian_noise(t, noise, rng, training)
        p = self.p
        keys_in = T.matmul(enc_in.chars, p("generator/attn_input/W1"))
        keys_out = T.matmul(enc_out.chars, p("generator/attn_output/W3"))
        h = t
        out = ForwardOutput([], [], [], [])
        for _ in range(self.dims.steps):
            f, a, h, w_in, w_out = self.generate_step(t, h, enc_in, enc_out, keys_in, keys_out, noise, rng, training)
            fl, al = self.select_symbols(f, a)
            out.func_logits.append(fl)
            out.arg_logits.append(al)
            out.attention_in.append(w_in)
            out.attention_out.append(w_out)
        return out


def _split_rows(enc: EncodedStrings, n: int) -> tuple[EncodedStrings, EncodedStrings]:
    """Split a stacked encoding into its first ``n`` rows and the rest, trimming padding."""
    halves = []
    for lo, hi in ((0, n), (n, enc.string.shape[0])):
        mask = enc.mask[lo:hi]
        width = int(mask.sum(axis=1).max())
        halves.append(EncodedStrings(_rows(enc.chars, lo, hi, width), mask[:, :width], _rows(enc.string, lo, hi)))
    return halves[0], halves[1]


def _rows(x: Tensor, lo: int, hi: int, width: int | None = None) -> Tensor:
    if width is None:
        out = x.data[lo:hi]
    else:
        out = x.data[lo:hi, :width]

    def fn(g):
        full = np.zeros_like(x.data)
        if width is None:
            full[lo:hi] = g
        else:
            full[lo:hi, :width] = g
        x.accumulate(full)

    return T._node(out, (x,), fn)


def sequence_loss(out: ForwardOutput, targets: np.ndarray) -> Tensor:
    """Mean over the batch of the summed negative log-likelihood of the 30 target ids."""
    targets = np.asarray(targets)
    logits = out.position_logits()
    if targets.ndim != 2 or targets.shape[1] != len(logits):
        raise T.ShapeError(f"targets must be (B, {len(logits)}), got {targets.shape}")
    total = None
    for k, lg in enumerate(logits):
        term = T.sum_all(T.nll(lg, targets[:, k]))
        total = term if total is None else T.add(total, term)
    return T.scale(total, 1.0 / targets.shape[0])


def uniform_loss() -> float:
    """Loss of a model whose every distribution is uniform."""
    return MAX_STEPS * float(np.log(N_FUNCS)) + MAX_STEPS * MAX_ARGS * float(np.log(N_ARGS))
