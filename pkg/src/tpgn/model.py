"""Forward computation of the caption generation network.

Two mutually-connected LSTM-style subnetworks drive generation: the
sentence-encoding subnet keeps a d x d matrix hidden state `S_hat` (a
would-be superposition of filler/role bindings), and the unbinding
subnet keeps a d-vector hidden state `p` from which the role-unbinding
vector `u` is produced each step. The word embedding is extracted as
f = S u, where S is the block-diagonal lift of S_hat (d copies along
the diagonal), then decoded to a vocabulary distribution.

Gate pre-activations follow the printed update equations verbatim,
including the minus sign on the previous-word embedding term; the sign
is absorbable into the D tensors but keeping it makes equation-to-code
audit trivial.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_core import order3_apply, order4_apply, sigmoid, softmax

GATES = ("f", "i", "o", "c")

WX_MODES = ("tied", "free")


@dataclass(frozen=True)
class HyperParams:
    """Structural sizes: state dim d, vocabulary V, feature dim d_v."""

    d: int
    V: int
    d_v: int
    T_max: int
    start_id: int = 0
    end_id: int = 1
    wx_mode: str = "tied"

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if self.V < 3:
            raise ValueError("vocabulary needs start, end and at least one word")
        if self.wx_mode not in WX_MODES:
            raise ValueError(f"wx_mode must be one of {WX_MODES}")
        if not (0 <= self.start_id < self.V and 0 <= self.end_id < self.V):
            raise ValueError("start_id/end_id out of vocabulary range")


def param_shapes(hyper: HyperParams) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every stored tensor, in canonical order."""
    d, v, dv = hyper.d, hyper.V, hyper.d_v
    shapes: dict[str, tuple[int, ...]] = {}
    for g in GATES:
        shapes[f"W1_{g}"] = (d, d, d)
    shapes["Cs"] = (d, d, dv)
    for g in GATES:
        shapes[f"D1_{g}"] = (d, d, d)
    for g in GATES:
        shapes[f"U1_{g}"] = (d, d, d, d)
    for g in GATES:
        shapes[f"b1_{g}"] = (d, d)
    for g in GATES:
        shapes[f"w2_{g}"] = (d,)
    for g in GATES:
        shapes[f"D2_{g}"] = (d, d)
    for g in GATES:
        shapes[f"U2_{g}"] = (d, d)
    for g in GATES:
        shapes[f"b2_{g}"] = (d,)
    shapes["Wu"] = (d * d, d)
    shapes["bu"] = (d * d,)
    shapes["We"] = (d, v)
    if hyper.wx_mode == "free":
        shapes["Wx"] = (v, d * d)
    shapes["bx"] = (v,)
    shapes["v_mean"] = (dv,)
    return shapes


def _fan_in(name: str, hyper: HyperParams) -> int:
    """Size of the index (or index pair) the tensor contracts away."""
    d = hyper.d
    if name.startswith(("W1_", "D1_")):
        return d
    if name.startswith("U1_"):
        return d * d
    if name == "Cs":
        return hyper.d_v
    if name.startswith(("w2_", "D2_", "U2_")):
        return d
    if name == "Wu":
        return d
    if name == "Wx":
        return d * d
    raise KeyError(name)


class ModelParams:
    """All stored tensors backed by one flat float64 array.

    Each named tensor is a view into ``flat``, so vectorized optimizer
    updates on ``flat`` are immediately visible through the views.
    ``We`` is trainable only when ``train_embeddings`` is set; ``v_mean``
    (the dataset feature mean subtracted at state init) is never
    trainable.
    """

    def __init__(self, hyper: HyperParams, train_embeddings: bool = False):
        shapes = param_shapes(hyper)
        total = sum(int(np.prod(s)) for s in shapes.values())
        self.flat = np.zeros(total)
        self.tensors: dict[str, np.ndarray] = {}
        self.slices: dict[str, slice] = {}
        self.train_embeddings = train_embeddings
        offset = 0
        for name, shape in shapes.items():
            size = int(np.prod(shape))
            sl = slice(offset, offset + size)
            self.slices[name] = sl
            self.tensors[name] = self.flat[sl].reshape(shape)
            offset += size
        frozen = {"v_mean"} if train_embeddings else {"v_mean", "We"}
        self.trainable = [n for n in self.tensors if n not in frozen]

    def __getattr__(self, name: str) -> np.ndarray:
        tensors = self.__dict__.get("tensors")
        if tensors is not None and name in tensors:
            return tensors[name]
        raise AttributeError(name)

    @property
    def wx_mode(self) -> str:
        return "free" if "Wx" in self.tensors else "tied"

    def copy(self) -> "ModelParams":
        other = object.__new__(ModelParams)
        other.flat = self.flat.copy()
        other.slices = self.slices
        other.train_embeddings = self.train_embeddings
        other.trainable = self.trainable
        other.tensors = {
            n: other.flat[sl].reshape(self.tensors[n].shape) for n, sl in self.slices.items()
        }
        return other


def init_params(
    hyper: HyperParams,
    seed: int,
    embeddings: np.ndarray | None = None,
    train_embeddings: bool = False,
) -> ModelParams:
    """Random initialization: uniform(-a, a) with a = 1/sqrt(fan-in).

    Biases start at zero except the forget-gate biases, which start at
    +1 (the conventional stabilizer for gated recurrences).
    """
    rng = np.random.default_rng(seed)
    params = ModelParams(hyper, train_embeddings=train_embeddings)
    for name, tensor in params.tensors.items():
        if name in ("We", "v_mean") or name.startswith(("b1_", "b2_", "bu", "bx")):
            continue
        a = 1.0 / np.sqrt(_fan_in(name, hyper))
        tensor[...] = rng.uniform(-a, a, size=tensor.shape)
    params.b1_f[...] = 1.0
    params.b2_f[...] = 1.0
    if embeddings is not None:
        if embeddings.shape != params.We.shape:
            raise ValueError(
                f"embedding shape {embeddings.shape} != expected {params.We.shape}"
            )
        params.We[...] = embeddings
    return params


@dataclass(frozen=True)
class TpgnState:
    """Recurrent state after a step: both hidden states, both cell states,
    and the word id fed back into the next step."""

    S_hat: np.ndarray  # (d, d)
    c1: np.ndarray     # (d, d)
    p: np.ndarray      # (d,)
    c2: np.ndarray     # (d,)
    prev_word: int


@dataclass(frozen=True)
class StepRecord:
    """Per-step values kept for interpretation: the unbinding vector,
    the extracted filler, and the decoded distribution."""

    u: np.ndarray
    f: np.ndarray
    probs: np.ndarray


def init_state(v, v_mean, params: ModelParams, hyper: HyperParams) -> TpgnState:
    """S_hat_0 = Cs (v - v_mean); everything else starts at zero."""
    v = np.asarray(v, dtype=np.float64)
    v_mean = np.asarray(v_mean, dtype=np.float64)
    if v.shape != (hyper.d_v,) or v_mean.shape != (hyper.d_v,):
        raise ValueError(f"feature vectors must have shape ({hyper.d_v},)")
    d = hyper.d
    return TpgnState(
        S_hat=order3_apply(params.Cs, v - v_mean),
        c1=np.zeros((d, d)),
        p=np.zeros(d),
        c2=np.zeros(d),
        prev_word=hyper.start_id,
    )


def s_cell_step(state: TpgnState, params: ModelParams, hyper: HyperParams):
    """One update of the sentence-encoding subnet; returns (S_hat, c1).

    Gate pre-activation: W1 p_{t-1} - D1 We x_{t-1} + U1 S_hat_{t-1} + b1,
    with order-3 contractions for the vector inputs and an order-4
    contraction for the matrix state.
    """
    e_prev = params.We[:, state.prev_word]
    t = params.tensors

    def pre(g):
        return (
            order3_apply(t[f"W1_{g}"], state.p)
            - order3_apply(t[f"D1_{g}"], e_prev)
            + order4_apply(t[f"U1_{g}"], state.S_hat)
            + t[f"b1_{g}"]
        )

    f1 = sigmoid(pre("f"))
    i1 = sigmoid(pre("i"))
    o1 = sigmoid(pre("o"))
    g1 = np.tanh(pre("c"))
    c1_new = f1 * state.c1 + i1 * g1
    return o1 * np.tanh(c1_new), c1_new


def u_cell_step(state: TpgnState, params: ModelParams, hyper: HyperParams):
    """One update of the unbinding subnet; returns (p, c2).

    Gate pre-activation: S_hat_{t-1} w2 - D2 We x_{t-1} + U2 p_{t-1} + b2.
    """
    e_prev = params.We[:, state.prev_word]
    t = params.tensors

    def pre(g):
        return (
            state.S_hat @ t[f"w2_{g}"]
            - t[f"D2_{g}"] @ e_prev
            + t[f"U2_{g}"] @ state.p
            + t[f"b2_{g}"]
        )

    f2 = sigmoid(pre("f"))
    i2 = sigmoid(pre("i"))
    o2 = sigmoid(pre("o"))
    g2 = np.tanh(pre("c"))
    c2_new = f2 * state.c2 + i2 * g2
    return o2 * np.tanh(c2_new), c2_new


def compute_unbinding(p: np.ndarray, params: ModelParams) -> np.ndarray:
    """Role-unbinding vector u = tanh(Wu p + bu), length d^2."""
    return np.tanh(params.Wu @ p + params.bu)


def unbind_filler(S_hat: np.ndarray, u: np.ndarray) -> np.ndarray:
    """f = S u for the block-diagonal lift S of S_hat, without materializing S.

    u is split into d chunks of length d; chunk k of f is S_hat @ u_k.
    """
    d = S_hat.shape[0]
    if u.shape != (d * d,):
        raise ValueError(f"unbinding vector must have length {d * d}, got {u.shape}")
    return (u.reshape(d, d) @ S_hat.T).ravel()


def decode_word(
    f: np.ndarray,
    params: ModelParams,
    hyper: HyperParams,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
):
    """Map a filler vector to (probs, word_id).

    In "tied" mode the logits are We^T applied to the mean of the d
    blocks of f (the de-embedding reading of weight tying, exact when the
    blocks agree); in "free" mode a full V x d^2 matrix is used. Greedy
    decoding breaks ties toward the lowest word id.
    """
    d = hyper.d
    if f.shape != (d * d,):
        raise ValueError(f"filler must have length {d * d}, got {f.shape}")
    if hyper.wx_mode == "tied":
        f_bar = f.reshape(d, d).mean(axis=0)
        logits = params.We.T @ f_bar + params.bx
    else:
        logits = params.Wx @ f + params.bx
    probs = softmax(logits)
    if mode == "greedy":
        word_id = int(np.argmax(probs))
    elif mode == "sample":
        if rng is None:
            raise ValueError("sampling mode needs an rng")
        word_id = int(rng.choice(hyper.V, p=probs))
    else:
        raise ValueError(f"unknown decode mode {mode!r}")
    return probs, word_id


def forward_caption(
    v,
    params: ModelParams,
    hyper: HyperParams,
    teacher: list[int] | None = None,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
):
    """Run the full generation loop; returns (word_ids, step records).

    With ``teacher`` given, the ground-truth token is fed back each step
    and exactly len(teacher) steps run. Free-running feeds back the
    emitted token and stops after emitting end_id or after T_max steps.
    """
    if teacher is not None and len(teacher) > hyper.T_max:
        raise ValueError(f"teacher sequence longer than T_max={hyper.T_max}")
    state = init_state(v, params.v_mean, params, hyper)
    steps = len(teacher) if teacher is not None else hyper.T_max
    words: list[int] = []
    records: list[StepRecord] = []
    for t in range(steps):
        s_hat, c1 = s_cell_step(state, params, hyper)
        p, c2 = u_cell_step(state, params, hyper)
        u = compute_unbinding(p, params)
        f = unbind_filler(s_hat, u)
        probs, word_id = decode_word(f, params, hyper, mode=mode, rng=rng)
        words.append(word_id)
        records.append(StepRecord(u=u, f=f, probs=probs))
        feedback = teacher[t] if teacher is not None else word_id
        state = TpgnState(s_hat, c1, p, c2, feedback)
        if teacher is None and word_id == hyper.end_id:
            break
    return words, records


def lift_block_diagonal(S_hat: np.ndarray) -> np.ndarray:
    """Materialize the d^2 x d^2 block-diagonal lift (reference/tests only)."""
    d = S_hat.shape[0]
    out = np.zeros((d * d, d * d))
    for k in range(d):
        out[k * d : (k + 1) * d, k * d : (k + 1) * d] = S_hat
    return out


# Saturation level that pins a sigmoid gate to 0/1 within ~4e-18.
_GATE_CLAMP = 40.0


def encode_sequence_as_params(word_ids: list[int], V: int, seed: int = 0):
    """Hand-build parameters that replay a fixed word sequence.

    Constructs an explicit superposition of word-embedding/role bindings,
    freezes the sentence state at that matrix (the visual input is the
    matrix itself, lifted through an identity Cs), and wires the
    unbinding subnet so each previously-emitted word selects the dual of
    the next role. The returned network therefore emits ``word_ids``
    followed by end-of-sentence, token-exactly, showing the generation
    scheme is representable in the architecture.

    ``word_ids`` must be distinct ids in [2, V); returns (params, hyper, v).
    """
    if len(set(word_ids)) != len(word_ids):
        raise ValueError("sequence words must be distinct")
    if any(not 2 <= w < V for w in word_ids):
        raise ValueError("sequence words must be content ids in [2, V)")
    d = V
    n_roles = len(word_ids) + 1  # one role per word plus one for end-of-sentence
    if n_roles > d:
        raise ValueError("need V >= len(word_ids) + 1 for orthonormal roles")
    hyper = HyperParams(
        d=d, V=V, d_v=d * d, T_max=len(word_ids) + 2, start_id=0, end_id=1, wx_mode="tied"
    )
    params = ModelParams(hyper)
    params.We[...] = np.eye(d)

    rng = np.random.default_rng(seed)
    roles, _ = np.linalg.qr(rng.standard_normal((d, n_roles)))

    filler_scale = 0.5  # keeps every structure entry inside tanh(1), so it is reachable
    emitted = list(word_ids) + [hyper.end_id]
    structure = filler_scale * sum(
        np.outer(params.We[:, w], roles[:, k]) for k, w in enumerate(emitted)
    )

    # Sentence subnet: input gate open, forget gate shut, output gate open;
    # the candidate is a constant whose double tanh lands exactly on the
    # structure matrix, so S_hat_t == structure for every t >= 1.
    params.b1_f[...] = -_GATE_CLAMP
    params.b1_i[...] = _GATE_CLAMP
    params.b1_o[...] = _GATE_CLAMP
    params.b1_c[...] = np.arctanh(np.arctanh(structure))

    # Also start there: v is the structure itself and Cs is the identity
    # on flattened matrices.
    params.Cs[...] = np.eye(d * d).reshape(d, d, d * d)
    v = structure.ravel().copy()

    # Unbinding subnet: p_t becomes kappa * e_{x_{t-1}} one step after
    # word x_{t-1} is fed back (gates clamped as above, candidate driven
    # only by the previous-word embedding).
    params.b2_f[...] = -_GATE_CLAMP
    params.b2_i[...] = _GATE_CLAMP
    params.b2_o[...] = _GATE_CLAMP
    for g in ("f", "i", "o"):
        params.tensors[f"D2_{g}"][...] = 0.0
    params.D2_c[...] = -np.eye(d)  # minus sign in the gate equation makes this +e_x
    kappa = np.tanh(np.tanh(1.0))

    # Each feedback word maps, through Wu, to the (tiled) dual of the role
    # of the word to emit next.
    unbind_scale = 0.5
    feedback = [hyper.start_id] + emitted[:-1]
    for k, prev in enumerate(feedback):
        target_u = unbind_scale * np.tile(roles[:, k], d)
        params.Wu[:, prev] = np.arctanh(target_u) / kappa
    return params, hyper, v
