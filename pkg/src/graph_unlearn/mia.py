"""Posterior-based membership inference used as the forgetting yardstick.

A logistic classifier over per-node confidence features (sorted posterior,
entropy, truth-class probability, CE loss) is trained to separate members
(retained training nodes) from non-members (half of the test set), then
scored on held-out halves plus every unlearning node.  A forgotten node
should look like a non-member.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .errors import ValidationError
from .graph import SplitIndices
from .numerics import LOG_GUARD, AdamState, adam_step, make_rng


def extract_features(posteriors: np.ndarray, labels: np.ndarray, idx) -> np.ndarray:
    """Feature rows: [sorted posterior desc | entropy | truth prob | CE loss]."""
    idx = np.asarray(idx, dtype=np.int64)
    p = posteriors[idx]
    ordered = -np.sort(-p, axis=1)
    entropy = -xlogy(p, p).sum(axis=1)
    truth = p[np.arange(idx.size), np.asarray(labels)[idx]]
    loss = -np.log(truth + LOG_GUARD)
    return np.column_stack([ordered, entropy, truth, loss])


@dataclass
class AttackModel:
    """Logistic membership classifier with its feature standardization."""

    weights: np.ndarray
    bias: float
    feature_mean: np.ndarray
    feature_std: np.ndarray
    metadata: dict = field(default_factory=dict)

    def scores(self, features: np.ndarray) -> np.ndarray:
        z = (features - self.feature_mean) / self.feature_std
        return z @ self.weights + self.bias

    def predict_member(self, features: np.ndarray) -> np.ndarray:
        return self.scores(features) >= 0.0


def _balance(a: np.ndarray, b: np.ndarray, rng: np.random.Generator):
    """Resample the minority group with replacement up to the majority size."""
    if a.shape[0] < b.shape[0]:
        extra = rng.integers(0, a.shape[0], size=b.shape[0] - a.shape[0])
        a = np.concatenate([a, a[extra]])
    elif b.shape[0] < a.shape[0]:
        extra = rng.integers(0, b.shape[0], size=a.shape[0] - b.shape[0])
        b = np.concatenate([b, b[extra]])
    return a, b


def train_attack(
    member_feats: np.ndarray,
    nonmember_feats: np.ndarray,
    rng: np.random.Generator,
    epochs: int = 400,
    learning_rate: float = 0.05,
) -> AttackModel:
    """Fit the logistic classifier by full-batch Adam on balanced groups."""
    if member_feats.shape[0] == 0 or nonmember_feats.shape[0] == 0:
        raise ValidationError("train_attack: both groups must be non-empty")
    member_feats, nonmember_feats = _balance(member_feats, nonmember_feats, rng)
    x = np.concatenate([member_feats, nonmember_feats])
    y = np.concatenate(
        [np.ones(member_feats.shape[0]), np.zeros(nonmember_feats.shape[0])]
    )
    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), 1e-12)
    xs = (x - mean) / std

    w = np.zeros((xs.shape[1], 1))
    b = np.zeros((1, 1))
    state = AdamState.for_params([w, b], learning_rate=learning_rate)
    final_loss = np.inf
    for _ in range(epochs):
        z = (xs @ w + b).ravel()
        # stable sigmoid cross entropy: log(1 + e^-|z|) + max(z, 0) - z*y
        final_loss = float(
            np.mean(np.logaddexp(0.0, -np.abs(z)) + np.maximum(z, 0.0) - z * y)
        )
        residual = 1.0 / (1.0 + np.exp(-z)) - y
        gw = (xs.T @ residual[:, None]) / xs.shape[0]
        gb = np.array([[residual.mean()]])
        w, b = adam_step([w, b], [gw, gb], state)

    preds = ((xs @ w + b).ravel() >= 0).astype(float)
    return AttackModel(
        weights=w.ravel(),
        bias=float(b.ravel()[0]),
        feature_mean=mean,
        feature_std=std,
        metadata={
            "epochs": epochs,
            "final_loss": final_loss,
            "train_accuracy": float(np.mean(preds == y)),
        },
    )


@dataclass(frozen=True)
class AttackSplit:
    """Disjoint index sets for attack training vs evaluation."""

    member_train: np.ndarray  # retained nodes used to fit the attack
    member_eval: np.ndarray  # retained holdout scored as members
    nonmember_train: np.ndarray  # test-half used to fit the attack
    nonmember_eval: np.ndarray  # other test-half scored as non-members

    def validate(self) -> None:
        train = np.concatenate([self.member_train, self.nonmember_train])
        evaluation = np.concatenate([self.member_eval, self.nonmember_eval])
        overlap = np.intersect1d(train, evaluation)
        if overlap.size:
            raise ValidationError(
                f"attack train and eval sets overlap at node {overlap[0]}"
            )


def split_attack_sets(splits: SplitIndices, rng: np.random.Generator) -> AttackSplit:
    """Halve the retained set (members) and the test set (non-members), seeded."""
    if splits.retained is None:
        raise ValidationError("attack split requires retained/unlearning sets")
    if splits.retained.size < 2 or splits.test.size < 2:
        raise ValidationError("attack split needs >= 2 retained and >= 2 test nodes")
    retained = rng.permutation(splits.retained)
    test = rng.permutation(splits.test)
    half_r, half_t = retained.size // 2, test.size // 2
    return AttackSplit(
        member_train=np.sort(retained[:half_r]),
        member_eval=np.sort(retained[half_r:]),
        nonmember_train=np.sort(test[:half_t]),
        nonmember_eval=np.sort(test[half_t:]),
    )


@dataclass
class MiaReport:
    all_node_accuracy: float
    unlearning_node_accuracy: float
    confusion: dict  # group -> {"member": count, "nonmember": count}

    def to_dict(self) -> dict:
        return {
            "all_node_accuracy": self.all_node_accuracy,
            "unlearning_node_accuracy": self.unlearning_node_accuracy,
            "confusion": self.confusion,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def evaluate_mia(
    model: AttackModel,
    posteriors: np.ndarray,
    labels: np.ndarray,
    splits: SplitIndices,
    attack_split: AttackSplit,
) -> MiaReport:
    """Score membership on {retained holdout, test holdout, all unlearning nodes}.

    all_node_accuracy counts a retained-holdout node as correct when predicted
    member, and test/unlearning nodes when predicted non-member.
    """
    attack_split.validate()
    unlearning = (
        splits.unlearning if splits.unlearning is not None else np.array([], np.int64)
    )

    def _counts(idx):
        if len(idx) == 0:
            return {"member": 0, "nonmember": 0}
        pred = model.predict_member(extract_features(posteriors, labels, idx))
        member = int(pred.sum())
        return {"member": member, "nonmember": int(len(idx) - member)}

    confusion = {
        "member_eval": _counts(attack_split.member_eval),
        "nonmember_eval": _counts(attack_split.nonmember_eval),
        "unlearning": _counts(unlearning),
    }
    correct = (
        confusion["member_eval"]["member"]
        + confusion["nonmember_eval"]["nonmember"]
        + confusion["unlearning"]["nonmember"]
    )
    total = attack_split.member_eval.size + attack_split.nonmember_eval.size + unlearning.size
    unl_acc = (
        confusion["unlearning"]["nonmember"] / unlearning.size if unlearning.size else 0.0
    )
    return MiaReport(
        all_node_accuracy=correct / total,
        unlearning_node_accuracy=unl_acc,
        confusion=confusion,
    )


def run_membership_attack(
    posteriors: np.ndarray, labels: np.ndarray, splits: SplitIndices, seed: int
) -> MiaReport:
    """Full protocol: split, featurize, fit, evaluate; deterministic per seed."""
    rng = make_rng(seed)
    attack_split = split_attack_sets(splits, rng)
    member = extract_features(posteriors, labels, attack_split.member_train)
    nonmember = extract_features(posteriors, labels, attack_split.nonmember_train)
    model = train_attack(member, nonmember, rng)
    return evaluate_mia(model, posteriors, labels, splits, attack_split)


def export_posteriors_csv(
    posteriors: np.ndarray, labels: np.ndarray, splits: SplitIndices, path
) -> None:
    """Raw per-node posteriors with split membership, for external plotting."""
    groups = np.full(posteriors.shape[0], "other", dtype=object)
    for name in ("train", "val", "test", "retained", "unlearning"):
        idx = getattr(splits, name)
        if idx is not None:
            groups[idx] = name
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["node", "label", "group"]
            + [f"p{c}" for c in range(posteriors.shape[1])]
        )
        for i in range(posteriors.shape[0]):
            writer.writerow(
                [i, int(np.asarray(labels)[i]), groups[i]]
                + [repr(float(x)) for x in posteriors[i]]
            )
