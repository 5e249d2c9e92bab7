"""Fine-tuning heads for molecular-property and drug-drug-interaction
prediction, with cross-validated training and split construction.

Fine-tuning encodes only the molecule view; the pretraining projector is
ignored and the prediction heads start from fresh parameters.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor, backward, constant, zero_grads
from .encoder import EncoderState, encode
from .hmg import HMG
from .metrics import MetricReport, aggregate_reports, metrics, roc_auc, rmse
from .rng import stream


class FinetuneError(ValueError):
    pass


class InsufficientDrugs(FinetuneError):
    pass


@dataclass
class PropertyTask:
    kind: str  # "binary-classification" or "regression"
    task_count: int
    labels: np.ndarray  # (n, task_count)
    mask: np.ndarray  # (n, task_count) bool; False marks missing labels

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.labels.shape != self.mask.shape or self.labels.shape[1] != self.task_count:
            raise FinetuneError("labels/mask shape does not match task_count")
        if not np.all(np.isfinite(self.labels[self.mask])):
            raise FinetuneError("labels must be finite where the mask is set")


@dataclass
class DdiTask:
    pairs: list[tuple[int, int]]  # indices into the molecule list
    labels: np.ndarray  # (n_pairs,) in {0, 1}
    split_mode: str = "transductive"

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=float)
        if len(self.pairs) != self.labels.size:
            raise FinetuneError("pair list and labels differ in length")


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 60
    patience: int = 10
    batch_size: int = 32
    step_size: float = 1e-3
    seed: int = 0
    symmetrize: bool = True
    folds: int = 5


@dataclass
class FinetuneResult:
    state: EncoderState
    report: dict
    fold_reports: list[MetricReport] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Heads


def predict_property(hmg: HMG, state: EncoderState) -> Tensor:
    """Raw per-task scores; sigmoid is applied at metric time for
    classification tasks."""
    h = ad.reshape(encode(hmg, state).h_graph, (1, state.config.d))
    hidden = ad.leaky_relu(ad.linear(h, state["mp.W1"], state["mp.b1"]),
                           state.config.leaky_slope)
    return ad.reshape(ad.linear(hidden, state["mp.W2"], state["mp.b2"]),
                      (state.mp_tasks,))


def _ddi_head(h_pair: Tensor, state: EncoderState) -> Tensor:
    hidden = ad.leaky_relu(ad.linear(h_pair, state["ddi.W1"], state["ddi.b1"]),
                           state.config.leaky_slope)
    return ad.linear(hidden, state["ddi.W2"], state["ddi.b2"])


def predict_ddi(hmg_a: HMG, hmg_b: HMG, state: EncoderState,
                symmetrize: bool = True) -> Tensor:
    """Raw interaction score from the concatenated pair embedding; with
    symmetrize, the two argument orders are averaged."""
    d = state.config.d
    ha = ad.reshape(encode(hmg_a, state).h_graph, (1, d))
    hb = ad.reshape(encode(hmg_b, state).h_graph, (1, d))
    score = _ddi_head(ad.concat([ha, hb], axis=1), state)
    if symmetrize:
        score = ad.scale(
            ad.add(score, _ddi_head(ad.concat([hb, ha], axis=1), state)), 0.5
        )
    return ad.reshape(score, ())


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60, 60)))


def _bce_with_logits(logits: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    """Masked mean of softplus(x) - x*y (binary cross-entropy on logits)."""
    weight = mask.astype(float)
    count = max(1.0, float(weight.sum()))
    per = ad.add(ad.softplus(logits), ad.mul(logits, constant(-labels)))
    return ad.scale(ad.sum_axis(ad.mul(per, constant(weight))), 1.0 / count)


def _squared_error(preds: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    weight = mask.astype(float)
    count = max(1.0, float(weight.sum()))
    diff = ad.add(preds, constant(-labels))
    return ad.scale(ad.sum_axis(ad.mul(ad.mul(diff, diff), constant(weight))),
                    1.0 / count)


# ---------------------------------------------------------------------------
# Folds and splits


def make_folds(n: int, folds: int, seed: int):
    """(train, val, test) index arrays per fold; an 8:1:1 layout built from
    ten shuffled chunks, test chunks disjoint across folds."""
    if n < 2 * folds:
        raise FinetuneError(f"{n} items are too few for {folds}-fold splitting")
    perm = stream(seed, "folds").permutation(n)
    chunks = np.array_split(perm, 10)
    out = []
    for fold in range(folds):
        test = chunks[fold]
        val = chunks[fold + 5]
        train = np.concatenate([chunks[i] for i in range(10) if i not in (fold, fold + 5)])
        out.append((train, val, test))
    return out


@dataclass
class PairSplits:
    train: list[tuple[str, str, int]]
    val: list[tuple[str, str, int]]
    test: list[tuple[str, str, int]]


SPLIT_MODES = ("transductive", "inductive-old-new", "inductive-new-new")


def make_ddi_splits(pairs: list[tuple[str, str]], mode: str, seed: int) -> PairSplits:
    """Split positive drug pairs and pad each split with one sampled
    negative per positive (corruption of one side, known positives and
    self-pairs excluded).

    Inductive modes partition drugs 80/20 into seen/unseen; test pairs have
    exactly one (old-new) or two (new-new) drugs absent from every training
    pair, negatives included.
    """
    if mode not in SPLIT_MODES:
        raise FinetuneError(f"unknown split mode '{mode}'")
    drugs = sorted({d for pair in pairs for d in pair})
    if len(drugs) < 10:
        raise InsufficientDrugs(f"need at least 10 distinct drugs, got {len(drugs)}")
    known = {frozenset(p) for p in pairs}
    rng = stream(seed, "ddi-split", mode)

    def sample_negatives(positives, pool):
        negatives = []
        pool = sorted(pool)
        for a, b in positives:
            for _ in range(100):
                corrupt_first = rng.random() < 0.5
                replacement = pool[int(rng.integers(len(pool)))]
                cand = (replacement, b) if corrupt_first else (a, replacement)
                if cand[0] != cand[1] and frozenset(cand) not in known:
                    negatives.append((cand[0], cand[1], 0))
                    break
        return negatives

    def finish(pos, pool):
        rows = [(a, b, 1) for a, b in pos] + sample_negatives(pos, pool)
        return rows

    if mode == "transductive":
        perm = rng.permutation(len(pairs))
        n_test = max(1, len(pairs) // 10)
        n_val = max(1, len(pairs) // 10)
        test_pos = [pairs[i] for i in perm[:n_test]]
        val_pos = [pairs[i] for i in perm[n_test : n_test + n_val]]
        train_pos = [pairs[i] for i in perm[n_test + n_val :]]
        return PairSplits(train=finish(train_pos, drugs),
                          val=finish(val_pos, drugs),
                          test=finish(test_pos, drugs))

    n_unseen = max(2, len(drugs) // 5)
    unseen = set(rng.choice(drugs, size=n_unseen, replace=False).tolist())
    seen = [d for d in drugs if d not in unseen]
    both_seen = [p for p in pairs if p[0] not in unseen and p[1] not in unseen]
    if not both_seen:
        raise InsufficientDrugs("no training pairs with both drugs seen")
    perm = rng.permutation(len(both_seen))
    n_val = max(1, len(both_seen) // 9)
    val_pos = [both_seen[i] for i in perm[:n_val]]
    train_pos = [both_seen[i] for i in perm[n_val:]]
    train_drugs = {d for p in train_pos for d in p}

    if mode == "inductive-old-new":
        test_pos = [p for p in pairs
                    if sum(d in train_drugs for d in p) == 1
                    and sum(d in unseen for d in p) >= 1]
        # Corrupt the training-seen side with another seen drug so exactly
        # one test drug stays train-known.
        negatives = []
        pool = sorted(train_drugs)
        for a, b in test_pos:
            seen_side = 0 if a in train_drugs else 1
            for _ in range(100):
                replacement = pool[int(rng.integers(len(pool)))]
                cand = (replacement, b) if seen_side == 0 else (a, replacement)
                if cand[0] != cand[1] and frozenset(cand) not in known:
                    negatives.append((cand[0], cand[1], 0))
                    break
        test = [(a, b, 1) for a, b in test_pos] + negatives
    else:  # inductive-new-new
        test_pos = [p for p in pairs if all(d not in train_drugs for d in p)
                    and all(d in unseen for d in p)]
        unseen_pool = sorted(unseen)
        negatives = []
        for a, b in test_pos:
            for _ in range(100):
                corrupt_first = rng.random() < 0.5
                replacement = unseen_pool[int(rng.integers(len(unseen_pool)))]
                cand = (replacement, b) if corrupt_first else (a, replacement)
                if cand[0] != cand[1] and frozenset(cand) not in known:
                    negatives.append((cand[0], cand[1], 0))
                    break
        test = [(a, b, 1) for a, b in test_pos] + negatives

    return PairSplits(train=finish(train_pos, sorted(train_drugs)),
                      val=finish(val_pos, sorted(train_drugs)),
                      test=test)


# ---------------------------------------------------------------------------
# Training loops


def _clone_state(state: EncoderState) -> EncoderState:
    clone = EncoderState(state.config, state.schema, d_z=state.d_z,
                         mp_tasks=state.mp_tasks)
    clone.load_arrays(state.named_arrays())
    return clone


def _property_scores(hmgs, indices, state) -> np.ndarray:
    with ad.no_grad():
        return np.stack([predict_property(hmgs[i], state).data for i in indices])


def _property_val_metric(task, scores, indices) -> float:
    """Mean ROC-AUC over tasks with both classes (classification) or
    negated RMSE (regression); higher is better."""
    labels = task.labels[indices]
    mask = task.mask[indices]
    if task.kind == "binary-classification":
        probs = _sigmoid(scores)
        values = []
        for t in range(task.task_count):
            rows = mask[:, t]
            if rows.any() and len(set(labels[rows, t])) == 2:
                values.append(roc_auc(labels[rows, t], probs[rows, t]))
        return float(np.mean(values)) if values else -math.inf
    diffs = []
    for t in range(task.task_count):
        rows = mask[:, t]
        if rows.any():
            diffs.append(rmse(labels[rows, t], scores[rows, t]))
    return -float(np.mean(diffs)) if diffs else -math.inf


def _train_property_fold(hmgs, task, state, config, train_idx, val_idx):
    adam = AdamState()
    params = state.parameters()
    best_metric = -math.inf
    best_params = state.named_arrays()
    strikes = 0
    order_rng = stream(config.seed, "property-order")
    for _ in range(config.epochs):
        order = order_rng.permutation(train_idx)
        for start in range(0, len(order), config.batch_size):
            chunk = order[start : start + config.batch_size]
            losses = []
            for i in chunk:
                logits = predict_property(hmgs[i], state)
                if task.kind == "binary-classification":
                    losses.append(_bce_with_logits(logits, task.labels[i], task.mask[i]))
                else:
                    losses.append(_squared_error(logits, task.labels[i], task.mask[i]))
            total = ad.scale(
                ad.sum_axis(ad.concat([ad.reshape(x, (1,)) for x in losses], axis=0)),
                1.0 / len(losses),
            )
            zero_grads(params)
            backward(total)
            ad.adam_step(params, adam, step_size=config.step_size)
        metric = _property_val_metric(task, _property_scores(hmgs, val_idx, state), val_idx)
        if metric > best_metric + 1e-12:
            best_metric = metric
            best_params = state.named_arrays()
            strikes = 0
        else:
            strikes += 1
            if strikes >= config.patience:
                break
    state.load_arrays(best_params)
    return best_metric


def _property_report(task, scores, indices) -> MetricReport:
    labels = task.labels[indices]
    mask = task.mask[indices]
    if task.kind == "binary-classification":
        probs = _sigmoid(scores)
        merged = [[], []]
        per_task = []
        for t in range(task.task_count):
            rows = mask[:, t]
            if rows.any() and len(set(labels[rows, t])) == 2:
                per_task.append(metrics(labels[rows, t], probs[rows, t],
                                        "binary-classification"))
        if not per_task:
            raise FinetuneError("no task with both classes in the test fold")
        return MetricReport(
            roc_auc=float(np.mean([r.roc_auc for r in per_task])),
            average_precision=float(np.mean([r.average_precision for r in per_task])),
            f1=float(np.mean([r.f1 for r in per_task])),
            accuracy=float(np.mean([r.accuracy for r in per_task])),
        )
    rows = mask.reshape(-1)
    return metrics(labels.reshape(-1)[rows], scores.reshape(-1)[rows], "regression")


def finetune_property(hmgs: list[HMG], task: PropertyTask, state: EncoderState,
                      config: FinetuneConfig) -> FinetuneResult:
    """K-fold cross-validation; each fold trains encoder plus a fresh head
    end-to-end with early stopping on the validation metric. Returns the
    best-validation fold's parameters and per-fold plus aggregate metrics."""
    folds = make_folds(len(hmgs), config.folds, config.seed)
    reports = []
    best = (-math.inf, None)
    for fold_no, (train_idx, val_idx, test_idx) in enumerate(folds):
        fold_state = _clone_state(state)
        fold_state.reinit_mp_head(task.task_count, seed=config.seed + 1000 + fold_no)
        fold_cfg = dataclasses.replace(config, seed=config.seed + fold_no)
        val_metric = _train_property_fold(hmgs, task, fold_state, fold_cfg,
                                          train_idx, val_idx)
        report = _property_report(task, _property_scores(hmgs, test_idx, fold_state),
                                  test_idx)
        reports.append(report)
        if val_metric > best[0]:
            best = (val_metric, fold_state)
    return FinetuneResult(state=best[1], report=aggregate_reports(reports),
                          fold_reports=reports)


def finetune_ddi(hmgs_by_drug: dict[str, HMG], task_pairs: PairSplits,
                 state: EncoderState, config: FinetuneConfig) -> FinetuneResult:
    """Train the interaction head (plus encoder) on the train split with
    early stopping on validation ROC-AUC; reports test metrics."""
    work = _clone_state(state)
    work.reinit_ddi_head(seed=config.seed + 500)
    params = work.parameters()
    adam = AdamState()
    order_rng = stream(config.seed, "ddi-order")

    def score_rows(rows, current) -> np.ndarray:
        with ad.no_grad():
            return np.array([
                float(predict_ddi(hmgs_by_drug[a], hmgs_by_drug[b], current,
                                  config.symmetrize).data)
                for a, b, _ in rows
            ])

    def val_metric(current) -> float:
        # Accuracy + AUC: ranking saturates long before the decision
        # threshold calibrates, so accuracy must keep driving the restore.
        rows = task_pairs.val
        labels = np.array([lab for _, _, lab in rows], dtype=float)
        probs = _sigmoid(score_rows(rows, current))
        acc = float(np.mean((probs >= 0.5) == (labels == 1.0)))
        if len(set(labels)) < 2:
            return acc
        return acc + roc_auc(labels, probs)

    best = (-math.inf, work.named_arrays())
    strikes = 0
    train_rows = list(task_pairs.train)
    for _ in range(config.epochs):
        perm = order_rng.permutation(len(train_rows))
        for start in range(0, len(perm), config.batch_size):
            chunk = perm[start : start + config.batch_size]
            losses = []
            for i in chunk:
                a, b, label = train_rows[i]
                logit = ad.reshape(
                    predict_ddi(hmgs_by_drug[a], hmgs_by_drug[b], work,
                                config.symmetrize), (1,))
                losses.append(_bce_with_logits(logit, np.array([float(label)]),
                                               np.array([True])))
            total = ad.scale(
                ad.sum_axis(ad.concat([ad.reshape(x, (1,)) for x in losses], axis=0)),
                1.0 / len(losses),
            )
            zero_grads(params)
            backward(total)
            ad.adam_step(params, adam, step_size=config.step_size)
        metric = val_metric(work)
        if metric > best[0] + 1e-12:
            best = (metric, work.named_arrays())
            strikes = 0
        else:
            strikes += 1
            if strikes >= config.patience:
                break
    work.load_arrays(best[1])
    test_labels = np.array([lab for _, _, lab in task_pairs.test], dtype=float)
    report = metrics(test_labels, _sigmoid(score_rows(task_pairs.test, work)),
                     "binary-classification")
    return FinetuneResult(state=work, report=aggregate_reports([report]),
                          fold_reports=[report])


def split_labeled_pairs(rows: list[tuple[str, str, int]], mode: str,
                        seed: int) -> PairSplits:
    """Split already-labeled pair rows (no negative generation)."""
    if mode not in SPLIT_MODES:
        raise FinetuneError(f"unknown split mode '{mode}'")
    rng = stream(seed, "labeled-split", mode)
    if mode == "transductive":
        perm = rng.permutation(len(rows))
        n_test = max(1, len(rows) // 10)
        n_val = max(1, len(rows) // 10)
        return PairSplits(
            train=[rows[i] for i in perm[n_test + n_val :]],
            val=[rows[i] for i in perm[n_test : n_test + n_val]],
            test=[rows[i] for i in perm[:n_test]],
        )
    drugs = sorted({d for a, b, _ in rows for d in (a, b)})
    if len(drugs) < 10:
        raise InsufficientDrugs(f"need at least 10 distinct drugs, got {len(drugs)}")
    unseen = set(rng.choice(drugs, size=max(2, len(drugs) // 5), replace=False).tolist())
    both_seen = [r for r in rows if r[0] not in unseen and r[1] not in unseen]
    if not both_seen:
        raise InsufficientDrugs("no training pairs with both drugs seen")
    perm = rng.permutation(len(both_seen))
    n_val = max(1, len(both_seen) // 9)
    val = [both_seen[i] for i in perm[:n_val]]
    train = [both_seen[i] for i in perm[n_val:]]
    train_drugs = {d for a, b, _ in train for d in (a, b)}
    wanted = 1 if mode == "inductive-old-new" else 0
    test = [r for r in rows
            if sum(d in train_drugs for d in (r[0], r[1])) == wanted
            and any(d in unseen for d in (r[0], r[1]))]
    return PairSplits(train=train, val=val, test=test)


def finetune(hmgs, task, state: EncoderState, config: FinetuneConfig) -> FinetuneResult:
    """Dispatch on the task type: PropertyTask runs cross-validated property
    training; DdiTask builds splits per its mode (generating negatives when
    only positives were supplied) and trains the interaction head."""
    if isinstance(task, PropertyTask):
        return finetune_property(hmgs, task, state, config)
    if isinstance(task, DdiTask):
        hmgs_by_key = {str(i): hmg for i, hmg in enumerate(hmgs)}
        rows = [(str(a), str(b), int(lab))
                for (a, b), lab in zip(task.pairs, task.labels)]
        if all(lab == 1 for _, _, lab in rows):
            splits = make_ddi_splits([(a, b) for a, b, _ in rows],
                                     task.split_mode, config.seed)
        else:
            splits = split_labeled_pairs(rows, task.split_mode, config.seed)
        return finetune_ddi(hmgs_by_key, splits, state, config)
    raise FinetuneError(f"unsupported task {type(task).__name__}")
