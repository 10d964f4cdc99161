"""Toy-scale hybrid fusion model: question embedding, ViT image encoder,
stacked co-attention, attentional reduction, fused sigmoid classifier.

Everything runs on the f64 autodiff tensors so gradients can be checked
against finite differences; full-scale training is out of scope.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import scenegen
from .dataset import Dataset, normalize_text
from .rng import SplitMix64
from .scenegen import GenConfig, RasterImage
from .tensor import (
    Parameter,
    Tensor,
    add,
    bce,
    concat,
    constant,
    gather_rows,
    gelu,
    layer_norm,
    matmul,
    scale,
    sigmoid,
    slice_cols,
    softmax,
    transpose,
)
from .textproc import tokenize

MAX_QUESTION_TOKENS = 44


@dataclass
class PhoVitConfig:
    d: int = 16  # question feature width
    max_len: int = MAX_QUESTION_TOKENS
    image_size: int = 16
    channels: int = 3
    patch: int = 4
    latent: int = 16  # ViT width D
    n_vit_layers: int = 1
    k_coattn: int = 2
    n_heads: int = 2
    n_reduce_layers: int = 1
    df: int = 32
    n_answers: int = 8
    ffn_mult: int = 2
    seed: int = 0

    def __post_init__(self):
        if (self.image_size * self.image_size) % (self.patch**2) != 0:
            raise ValueError("image area must be divisible by patch^2")
        if self.image_size % self.patch != 0:
            raise ValueError("image side must be divisible by patch size")
        if self.latent % self.n_heads or self.d % self.n_heads:
            raise ValueError("widths must be divisible by n_heads")

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.patch) ** 2

    @classmethod
    def tiny(cls) -> "PhoVitConfig":
        return cls()

    @classmethod
    def grad_check_size(cls) -> "PhoVitConfig":
        """Reduced widths so the full finite-difference sweep stays fast."""
        return cls(
            d=8, image_size=16, patch=4, latent=8, n_vit_layers=1, k_coattn=2,
            n_heads=2, n_reduce_layers=1, df=16, n_answers=4,
        )


@dataclass
class EmbeddingTable:
    vocab: dict[str, int]
    matrix: np.ndarray
    unk_index: int

    def indices(self, tokens, max_len: int) -> list[int]:
        trimmed = tokens[:max_len]
        if not trimmed:
            return [self.unk_index]
        return [self.vocab.get(t, self.unk_index) for t in trimmed]


UNK_TOKEN = "<unk>"


def build_embedding_table(tokens: set[str], d: int, seed: int = 0) -> EmbeddingTable:
    ordered = sorted(tokens - {UNK_TOKEN})
    vocab = {UNK_TOKEN: 0}
    for t in ordered:
        vocab[t] = len(vocab)
    rng = np.random.default_rng(seed)
    matrix = rng.normal(0.0, 0.02, size=(len(vocab), d))
    return EmbeddingTable(vocab=vocab, matrix=matrix, unk_index=0)


def load_word2vec_text(path: str, d: int) -> EmbeddingTable:
    """word2vec text format: one line per token, optional count header."""
    vocab: dict[str, int] = {}
    rows: list[np.ndarray] = []
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().split()
        lines = []
        if len(first) != 2 or not all(p.lstrip("-").isdigit() for p in first):
            lines.append(first)
        for line in fh:
            lines.append(line.split())
    for parts in lines:
        if not parts:
            continue
        token, values = parts[0], parts[1:]
        if len(values) != d:
            raise ValueError(
                f"token {token!r} has {len(values)} values, expected {d}"
            )
        vocab[token] = len(rows)
        rows.append(np.array([float(v) for v in values]))
    if UNK_TOKEN not in vocab:
        vocab[UNK_TOKEN] = len(rows)
        rows.append(np.zeros(d))
    return EmbeddingTable(
        vocab=vocab, matrix=np.stack(rows), unk_index=vocab[UNK_TOKEN]
    )


@dataclass
class AnswerVocab:
    answers: tuple[str, ...]
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {a: i for i, a in enumerate(self.answers)}

    def __len__(self):
        return len(self.answers)

    def index_of(self, answer: str) -> int | None:
        return self.index.get(normalize_text(answer))


def build_answer_vocab(train: Dataset, n: int) -> AnswerVocab:
    """Top-n normalized training answers by frequency, ties lexicographic."""
    train_questions = train.questions_for_split("train") or train.questions
    if not train_questions:
        raise ValueError("empty training split")
    counts = Counter(normalize_text(q.answer) for q in train_questions)
    if n > len(counts):
        warnings.warn(
            f"requested {n} answers but only {len(counts)} are distinct",
            stacklevel=2,
        )
        n = len(counts)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return AnswerVocab(answers=tuple(a for a, _ in ranked[:n]))


# ---------------------------------------------------------------------------
# Parameter construction


def _param_shapes(cfg: PhoVitConfig, vocab_size: int, n_answers: int) -> dict[str, tuple]:
    d, dd, df = cfg.d, cfg.latent, cfg.df
    hidden_q = cfg.ffn_mult * d
    hidden_v = cfg.ffn_mult * dd
    patch_dim = cfg.patch * cfg.patch * cfg.channels
    shapes: dict[str, tuple] = {
        "embed.table": (vocab_size, d),
        "patch.w": (patch_dim, dd),
        "patch.b": (dd,),
        "vit.cls": (1, dd),
        "vit.pos": (cfg.n_patches + 1, dd),
        "adapter.w": (dd, d),
    }

    def attn(prefix, width):
        for m in ("wq", "wk", "wv", "wo"):
            shapes[f"{prefix}.{m}"] = (width, width)

    def ffn(prefix, width, hidden):
        shapes[f"{prefix}.w1"] = (width, hidden)
        shapes[f"{prefix}.b1"] = (hidden,)
        shapes[f"{prefix}.w2"] = (hidden, width)
        shapes[f"{prefix}.b2"] = (width,)

    def ln(prefix, width):
        shapes[f"{prefix}.g"] = (width,)
        shapes[f"{prefix}.b"] = (width,)

    for i in range(cfg.n_vit_layers):
        attn(f"vit.{i}.attn", dd)
        ln(f"vit.{i}.ln1", dd)
        ffn(f"vit.{i}.ffn", dd, hidden_v)
        ln(f"vit.{i}.ln2", dd)
    for k in range(cfg.k_coattn):
        attn(f"da.{k}.q_sa", d)
        ln(f"da.{k}.q_ln", d)
        ffn(f"da.{k}.q_ffn", d, hidden_q)
        attn(f"da.{k}.i_sa", d)
        attn(f"da.{k}.i_ga", d)
        ln(f"da.{k}.i_ln", d)
        ffn(f"da.{k}.i_ffn", d, hidden_q)
    for stream in ("q", "i"):
        for i in range(cfg.n_reduce_layers):
            attn(f"reduce.{stream}.msa.{i}", d)
        shapes[f"reduce.{stream}.score"] = (d, 1)
    shapes["fuse.wx"] = (d, df)
    shapes["fuse.wy"] = (d, df)
    ln("fuse.ln", df)
    ffn("fuse.vlffn", df, df)
    shapes["out.w"] = (df, n_answers)
    shapes["out.b"] = (n_answers,)
    return shapes


def init_params(
    cfg: PhoVitConfig,
    embedding: EmbeddingTable,
    n_answers: int,
) -> dict[str, Parameter]:
    rng = np.random.default_rng(cfg.seed)
    params: dict[str, Parameter] = {}
    for name, shape in _param_shapes(cfg, len(embedding.vocab), n_answers).items():
        if name == "embed.table":
            value = embedding.matrix.copy()
        elif name.endswith(".g"):
            value = np.ones(shape)
        elif name.endswith((".b", ".b1", ".b2")):
            value = np.zeros(shape)
        else:
            value = rng.normal(0.0, 0.02, size=shape)
        params[name] = Parameter(name, value)
    return params


def param_group(name: str) -> str:
    parts = name.split(".")
    if parts[0] in ("vit", "da") and len(parts) > 1 and parts[1].isdigit():
        return ".".join(parts[:2])
    if parts[0] == "reduce":
        return ".".join(parts[:2])
    return parts[0]


# ---------------------------------------------------------------------------
# Forward blocks (operate on a dict of leaf Tensors keyed by parameter name)


def embed_question(tokens, table: EmbeddingTable, cfg: PhoVitConfig,
                   leaf: Tensor | None = None) -> Tensor:
    """Look up token rows, truncated at max_len; empty input pads one unk row."""
    idx = table.indices(tokens, cfg.max_len)
    src = leaf if leaf is not None else constant(table.matrix)
    return gather_rows(src, idx)


def patchify(img: RasterImage, patch: int) -> np.ndarray:
    """Row-major patch sequence, each patch flattened pixel-major."""
    h, w = img.height, img.width
    if h % patch or w % patch:
        raise ValueError("image sides must be divisible by the patch size")
    out = []
    for i in range(0, h, patch):
        for j in range(0, w, patch):
            out.append(img.pixels[i : i + patch, j : j + patch, :].reshape(-1))
    return np.stack(out)


def _mha(x: Tensor, kv: Tensor, p: dict[str, Tensor], prefix: str, n_heads: int) -> Tensor:
    width = x.shape[1]
    dh = width // n_heads
    q = matmul(x, p[f"{prefix}.wq"])
    k = matmul(kv, p[f"{prefix}.wk"])
    v = matmul(kv, p[f"{prefix}.wv"])
    heads = []
    for h in range(n_heads):
        qh = slice_cols(q, h * dh, (h + 1) * dh)
        kh = slice_cols(k, h * dh, (h + 1) * dh)
        vh = slice_cols(v, h * dh, (h + 1) * dh)
        att = softmax(scale(matmul(qh, transpose(kh)), 1.0 / np.sqrt(dh)), axis=-1)
        heads.append(matmul(att, vh))
    return matmul(concat(heads, axis=1), p[f"{prefix}.wo"])


def _self_attention(x, p, prefix, n_heads):
    return _mha(x, x, p, prefix, n_heads)


def _guided_attention(x, guide, p, prefix, n_heads):
    return _mha(x, guide, p, prefix, n_heads)


def _ffn(x: Tensor, p: dict[str, Tensor], prefix: str) -> Tensor:
    h = gelu(add(matmul(x, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
    return add(matmul(h, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])


def _ln(x: Tensor, p: dict[str, Tensor], prefix: str) -> Tensor:
    return layer_norm(x, p[f"{prefix}.g"], p[f"{prefix}.b"])


def vit_encode(patches: Tensor, p: dict[str, Tensor], cfg: PhoVitConfig) -> Tensor:
    x = add(matmul(patches, p["patch.w"]), p["patch.b"])
    x = concat([p["vit.cls"], x], axis=0)
    x = add(x, p["vit.pos"])
    for i in range(cfg.n_vit_layers):
        x = add(x, _self_attention(_ln(x, p, f"vit.{i}.ln1"), p, f"vit.{i}.attn", cfg.n_heads))
        x = add(x, _ffn(_ln(x, p, f"vit.{i}.ln2"), p, f"vit.{i}.ffn"))
    return matmul(x, p["adapter.w"])


def da_layer(
    q_prev: Tensor, i_prev: Tensor, p: dict[str, Tensor], prefix: str, cfg: PhoVitConfig
) -> tuple[Tensor, Tensor]:
    s = add(q_prev, _self_attention(q_prev, p, f"{prefix}.q_sa", cfg.n_heads))
    t = _ln(s, p, f"{prefix}.q_ln")
    q_k = add(t, _ffn(t, p, f"{prefix}.q_ffn"))

    si = add(i_prev, _self_attention(i_prev, p, f"{prefix}.i_sa", cfg.n_heads))
    gi = add(si, _guided_attention(si, q_k, p, f"{prefix}.i_ga", cfg.n_heads))
    ti = _ln(gi, p, f"{prefix}.i_ln")
    i_k = add(ti, _ffn(ti, p, f"{prefix}.i_ffn"))
    return q_k, i_k


def stacked_coattention(
    q0: Tensor, i0: Tensor, p: dict[str, Tensor], cfg: PhoVitConfig
) -> tuple[Tensor, Tensor]:
    if cfg.k_coattn < 1:
        raise ValueError("co-attention depth must be >= 1")
    q, i = q0, i0
    for k in range(cfg.k_coattn):
        q, i = da_layer(q, i, p, f"da.{k}", cfg)
    return q, i


def attentional_reduce(
    x: Tensor, p: dict[str, Tensor], prefix: str, cfg: PhoVitConfig
) -> tuple[Tensor, Tensor]:
    """Collapse a (t x d) sequence to (1 x d) via learned softmax weights."""
    h = x
    for i in range(cfg.n_reduce_layers):
        h = add(h, _self_attention(h, p, f"{prefix}.msa.{i}", cfg.n_heads))
    scores = matmul(h, p[f"{prefix}.score"])  # (t, 1)
    alpha = softmax(scores, axis=0)
    return matmul(transpose(alpha), x), alpha


def fuse_classify(
    q_f: Tensor, i_f: Tensor, p: dict[str, Tensor], cfg: PhoVitConfig
) -> Tensor:
    z = _ln(add(matmul(q_f, p["fuse.wx"]), matmul(i_f, p["fuse.wy"])), p, "fuse.ln")
    h = _ffn(z, p, "fuse.vlffn")
    logits = add(matmul(h, p["out.w"]), p["out.b"])
    return sigmoid(logits)


class PhoVitModel:
    """Bundles config, embedding table, answer vocabulary and parameters."""

    def __init__(
        self,
        cfg: PhoVitConfig,
        embedding: EmbeddingTable,
        answer_vocab: AnswerVocab,
        params: dict[str, Parameter] | None = None,
    ):
        self.cfg = cfg
        self.embedding = embedding
        self.answer_vocab = answer_vocab
        if len(answer_vocab) > cfg.n_answers:
            raise ValueError("answer vocabulary exceeds configured n_answers")
        self.params = params or init_params(cfg, embedding, cfg.n_answers)

    def leaves(self) -> dict[str, Tensor]:
        return {name: constant(p.value) for name, p in self.params.items()}

    def forward_graph(
        self, img: RasterImage, question: str, leaves: dict[str, Tensor] | None = None
    ) -> tuple[Tensor, dict[str, Tensor]]:
        p = leaves or self.leaves()
        tokens = tokenize(question)
        q0 = embed_question(tokens, self.embedding, self.cfg, leaf=p["embed.table"])
        patches = constant(patchify(img, self.cfg.patch))
        i0 = vit_encode(patches, p, self.cfg)
        q_k, i_k = stacked_coattention(q0, i0, p, self.cfg)
        q_f, _ = attentional_reduce(q_k, p, "reduce.q", self.cfg)
        i_f, _ = attentional_reduce(i_k, p, "reduce.i", self.cfg)
        s = fuse_classify(q_f, i_f, p, self.cfg)
        return s, p

    def forward(self, img: RasterImage, question: str) -> tuple[np.ndarray, str]:
        s, _ = self.forward_graph(img, question)
        probs = s.data.reshape(-1)
        return probs, self.answer_vocab.answers[int(np.argmax(probs))]

    def loss_graph(
        self, img: RasterImage, question: str, target: np.ndarray,
        leaves: dict[str, Tensor] | None = None,
    ) -> tuple[Tensor, dict[str, Tensor]]:
        s, p = self.forward_graph(img, question, leaves)
        return bce(s, target.reshape(1, -1), reduction="sum"), p

    def one_hot(self, answer: str) -> np.ndarray | None:
        idx = self.answer_vocab.index_of(answer)
        if idx is None:
            return None
        target = np.zeros(self.cfg.n_answers)
        target[idx] = 1.0
        return target

    def train_step(self, batch, lr: float) -> float:
        """One plain gradient-descent step over (image, question, target) triples."""
        for p in self.params.values():
            p.zero_grad()
        total = 0.0
        for img, question, target in batch:
            loss, leaves = self.loss_graph(img, question, target)
            loss.backward()
            total += float(loss.data)
            for name, leaf in leaves.items():
                self.params[name].grad += leaf.grad
        if not np.isfinite(total):
            raise FloatingPointError(
                f"non-finite loss {total}; diverged (check learning rate)"
            )
        for p in self.params.values():
            p.value -= lr * p.grad
        return total


# ---------------------------------------------------------------------------
# Verification harnesses


def _synthetic_sample(cfg: PhoVitConfig, seed: int = 7):
    gen_cfg = GenConfig(
        n_scenes=1, questions_per_scene=1, seed=seed, image_size=cfg.image_size,
        patch_size=cfg.patch,
    )
    rng = SplitMix64(seed)
    scene = scenegen.generate_scene(rng, gen_cfg)
    img = scenegen.rasterize_scene(scene, cfg.image_size)
    program = scenegen.sample_program("color", scene, rng)
    question = scenegen.realize_question(program, rng)
    answer = scenegen.execute_program(program, scene)
    return img, question, answer


def grad_check_model(
    cfg: PhoVitConfig | None = None,
    eps: float = 1e-5,
    tol: float = 1e-4,
    freeze: set[str] | None = None,
    seed: int = 7,
) -> dict:
    """Compare analytic gradients to central finite differences per group."""
    if cfg is None:
        cfg = PhoVitConfig.grad_check_size()
    freeze = freeze or set()
    img, question, answer = _synthetic_sample(cfg, seed)
    tokens = {t for t in tokenize(question)}
    embedding = build_embedding_table(tokens, cfg.d, seed=cfg.seed)
    vocab = AnswerVocab(answers=(normalize_text(answer),) + tuple(
        f"answer_{i}" for i in range(cfg.n_answers - 1)
    ))
    model = PhoVitModel(cfg, embedding, vocab, params=None)
    target = model.one_hot(answer)

    loss, leaves = model.loss_graph(img, question, target)
    loss.backward()
    analytic = {name: leaf.grad.copy() for name, leaf in leaves.items()}

    def loss_value() -> float:
        l, _ = model.loss_graph(img, question, target)
        return float(l.data)

    report: dict[str, dict] = {}
    for name, param in model.params.items():
        group = param_group(name)
        if group in freeze:
            report[group] = {"skipped": True, "notice": "frozen group"}
            continue
        entry = report.setdefault(group, {"max_rel_error": 0.0})
        value = param.value
        flat = value.ravel()
        ana = analytic[name].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = loss_value()
            flat[i] = orig - eps
            fm = loss_value()
            flat[i] = orig
            fd = (fp - fm) / (2 * eps)
            rel = abs(ana[i] - fd) / max(1.0, abs(ana[i]), abs(fd))
            if rel > entry["max_rel_error"]:
                entry["max_rel_error"] = rel
    passed = all(
        entry.get("skipped") or entry["max_rel_error"] < tol
        for entry in report.values()
    )
    return {"groups": report, "tol": tol, "eps": eps, "passed": passed}


def make_training_batch(cfg: PhoVitConfig, n_samples: int = 8, seed: int = 2024):
    """Fixed rasterized color-query batch plus the model built for it."""
    gen_cfg = GenConfig(
        n_scenes=n_samples,
        questions_per_scene=1,
        category_mix={"color": 1.0},
        seed=seed,
        image_size=cfg.image_size,
        patch_size=cfg.patch,
    )
    generated = scenegen.generate_dataset(gen_cfg)
    d = generated.dataset
    tokens = set()
    for q in d.questions:
        tokens.update(tokenize(q.question))
    embedding = build_embedding_table(tokens, cfg.d, seed=cfg.seed)
    answers = sorted({normalize_text(q.answer) for q in d.questions})
    vocab = AnswerVocab(answers=tuple(answers))
    if len(vocab) > cfg.n_answers:
        raise ValueError("increase n_answers for this batch")
    model = PhoVitModel(cfg, embedding, vocab)
    batch = []
    for q in d.questions:
        target = model.one_hot(q.answer)
        batch.append((generated.images[q.image_id], q.question, target))
    return model, batch


def training_probe(
    cfg: PhoVitConfig | None = None,
    steps: int = 300,
    lr: float = 0.05,
    seed: int = 2024,
) -> dict:
    """Plain gradient descent on the fixed batch; reports the loss trajectory."""
    if cfg is None:
        cfg = PhoVitConfig.tiny()
    model, batch = make_training_batch(cfg, seed=seed)
    losses = [model.train_step(batch, lr) for _ in range(steps)]
    return {
        "initial_loss": losses[0],
        "final_loss": losses[-1],
        "losses": losses,
        "halved": losses[-1] <= 0.5 * losses[0],
    }
