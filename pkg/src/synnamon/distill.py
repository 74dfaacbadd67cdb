"""End-to-end training of a module net against teacher sentence embeddings,
chance-level MSE normalization, and evaluation."""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff
from .autodiff import Tape
from .dataset import SentenceRecord
from .errors import DegenerateChance, NonFiniteLoss, TooFewRecords
from .modules import Architecture, ModuleRegistry, compose_sentence, save_checkpoint
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    arch: Architecture = Architecture.LINEAR
    lr: float = 5e-5
    epochs: int = 100
    accumulation: int = 1  # sentences per optimizer step
    seed: int = 0
    shuffle: bool = True
    pos_layer: bool = True

    def __post_init__(self):
        self.arch = Architecture(self.arch)
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.accumulation < 1:
            raise ValueError("accumulation must be >= 1")


@dataclass
class TrainHistory:
    """Per-epoch learning curve plus the normalization constant."""

    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    val_normalized: list = field(default_factory=list)
    chance_mse: float = float("nan")

    @property
    def best_epoch(self) -> int:
        """Index of the minimum validation MSE; ties go to the earliest."""
        if not self.val_mse:
            raise ValueError("empty history")
        return int(np.argmin(self.val_mse))

    @property
    def best_val_mse(self) -> float:
        return self.val_mse[self.best_epoch]

    @property
    def best_val_normalized(self) -> float:
        return self.val_normalized[self.best_epoch]

    def __len__(self) -> int:
        return len(self.val_mse)


def _pair_mse(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    return float(np.mean(diff * diff))


def _pair_from_index(linear: int, n: int) -> tuple[int, int]:
    # unordered pair (i, j), i < j, from its rank in row-major triangle order
    # rank(i, j) = i*n - i*(i+1)/2 + (j - i - 1)
    i = n - 2 - (math.isqrt(8 * (n * (n - 1) // 2 - linear - 1) + 1) - 1) // 2
    j = linear - (i * n - i * (i + 1) // 2) + i + 1
    return i, j


def chance_mse(records: list[SentenceRecord], pair_budget: int = 1_000_000,
               seed: int = 0) -> float:
    """Average MSE between sentence embeddings over all unordered distinct
    pairs, or over ``pair_budget`` seeded samples without replacement when
    the pair count exceeds the budget."""
    n = len(records)
    if n < 2:
        raise TooFewRecords("chance MSE needs at least 2 records")
    vectors = [r.sentence_vector for r in records]
    total_pairs = n * (n - 1) // 2
    if total_pairs <= pair_budget:
        acc = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                acc += _pair_mse(vectors[i], vectors[j])
        return acc / total_pairs
    picks = random.Random(seed).sample(range(total_pairs), pair_budget)
    acc = 0.0
    for linear in picks:
        i, j = _pair_from_index(linear, n)
        acc += _pair_mse(vectors[i], vectors[j])
    return acc / pair_budget


def _epoch_order(n: int, cfg: TrainConfig, epoch: int) -> list[int]:
    order = list(range(n))
    if cfg.shuffle:
        random.Random(f"{cfg.seed}:{epoch}").shuffle(order)
    return order


def _mean_val_mse(records: list[SentenceRecord], registry: ModuleRegistry,
                  threads: int = 1) -> float:
    losses = _per_record_mse(records, registry, threads)
    return float(sum(losses) / len(losses))


def _per_record_mse(records: list[SentenceRecord], registry: ModuleRegistry,
                    threads: int = 1) -> list[float]:
    def one(record: SentenceRecord) -> float:
        tape = Tape()
        out = compose_sentence(record.tree, record.word_vector_list(),
                               registry, tape, strict=True)
        return _pair_mse(out.value, record.sentence_vector)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, records))  # order preserved
    return [one(r) for r in records]


def train(
    train_records: list[SentenceRecord],
    val_records: list[SentenceRecord],
    registry: ModuleRegistry | None,
    cfg: TrainConfig,
    out_dir=None,
    threads: int = 1,
) -> tuple[ModuleRegistry, TrainHistory]:
    """Train the registry end-to-end by sentence-level gradient descent.

    Per sentence the tree's module net is built on a fresh tape and the MSE
    against the teacher sentence embedding is backpropagated; gradients are
    summed over ``cfg.accumulation`` sentences per Adam step. Modules are
    initialized lazily on first encounter. Validation runs each epoch on the
    frozen registry; chance MSE is computed once over train + val. When
    ``out_dir`` is given, ``best.synm`` tracks the minimum validation MSE and
    ``final.synm`` is written after the last epoch.
    """
    if not train_records:
        raise TooFewRecords("no training records")
    dim = train_records[0].dim
    if registry is None:
        registry = ModuleRegistry(dim=dim, arch=cfg.arch, seed=cfg.seed,
                                  pos_layer=cfg.pos_layer)
    history = TrainHistory()
    history.chance_mse = chance_mse(list(train_records) + list(val_records))
    state = AdamState(lr=cfg.lr)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    best = float("inf")

    for epoch in range(cfg.epochs):
        grad_acc: dict = {}
        pending = 0
        epoch_loss = 0.0
        for i in _epoch_order(len(train_records), cfg, epoch):
            record = train_records[i]
            tape = Tape()
            out = compose_sentence(record.tree, record.word_vector_list(),
                                   registry, tape, strict=False)
            target = tape.constant(record.sentence_vector)
            loss = autodiff.mse(out, target, tape)
            value = loss.value[0, 0]
            if not np.isfinite(value):
                raise NonFiniteLoss(
                    f"loss diverged at epoch {epoch}, sentence {record.id!r}"
                )
            epoch_loss += value
            for key, g in autodiff.backward(tape, loss).items():
                acc = grad_acc.get(key)
                grad_acc[key] = g if acc is None else acc + g
            pending += 1
            if pending == cfg.accumulation:
                _apply_step(registry, state, grad_acc)
                grad_acc, pending = {}, 0
        if pending:
            _apply_step(registry, state, grad_acc)

        val = _mean_val_mse(val_records, registry, threads) if val_records else float("nan")
        history.train_mse.append(float(epoch_loss / len(train_records)))
        history.val_mse.append(val)
        history.val_normalized.append(val / history.chance_mse)
        log.info("epoch %d: train %.6g val %.6g (normalized %.4g)",
                 epoch, history.train_mse[-1], val, history.val_normalized[-1])
        if out_dir is not None and val < best:
            save_checkpoint(registry, out_dir / "best.synm")
        best = min(best, val)

    if out_dir is not None:
        save_checkpoint(registry, out_dir / "final.synm")
    return registry, history


def _apply_step(registry: ModuleRegistry, state: AdamState, grads: dict) -> None:
    touched = {key[0] for key in grads}
    params: dict = {}
    for rule_key in touched:
        params.update(registry.modules[rule_key].parameters())
    updated, _ = adam_step(state, params, grads)
    registry.apply_updates(updated)


def evaluate(records: list[SentenceRecord], registry: ModuleRegistry | None,
             threads: int = 1) -> tuple[float, float]:
    """Mean MSE of the composed outputs against the teacher embeddings and
    its chance-normalized score over the same records.

    With ``registry=None`` the constant dataset-mean predictor is scored
    instead (diagnostic baseline; exactly (n-1)/(2n) under all-pairs chance).
    """
    if not records:
        raise TooFewRecords("no records to evaluate")
    if registry is None:
        mean_vec = np.mean([r.sentence_vector for r in records], axis=0)
        losses = [_pair_mse(mean_vec, r.sentence_vector) for r in records]
        mean_mse = float(sum(losses) / len(losses))
    else:
        mean_mse = _mean_val_mse(records, registry, threads)
    chance = chance_mse(records)
    if chance == 0.0:
        raise DegenerateChance("all sentence embeddings are identical")
    return mean_mse, mean_mse / chance


# ---------------------------------------------------------------------------
# history CSV: epoch rows plus a one-line chance footer


def export_history_csv(history: TrainHistory, path) -> None:
    """Write ``epoch,train_mse,val_mse,val_normalized`` rows and a final
    ``chance_mse,<value>`` footer, at full float precision."""
    if len(history) == 0:
        raise ValueError("refusing to export an empty history")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_mse,val_mse,val_normalized\n")
        for epoch in range(len(history)):
            fh.write(f"{epoch},{float(history.train_mse[epoch])!r},"
                     f"{float(history.val_mse[epoch])!r},"
                     f"{float(history.val_normalized[epoch])!r}\n")
        fh.write(f"chance_mse,{float(history.chance_mse)!r}\n")


def load_history_csv(path) -> TrainHistory:
    history = TrainHistory()
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "epoch,train_mse,val_mse,val_normalized":
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            if parts[0] == "chance_mse":
                history.chance_mse = float(parts[1])
                continue
            _, train_v, val_v, norm_v = parts
            history.train_mse.append(float(train_v))
            history.val_mse.append(float(val_v))
            history.val_normalized.append(float(norm_v))
    return history
