"""
Dataset Model - Questions, groups and per-group preference targets
"""

import logging
import string
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .distribution import DistributionError, ProbDistribution, Ranking, ranking_from_distribution

logger = logging.getLogger(__name__)

# Rows whose target sums fall inside this band are renormalized on load
LOAD_SUM_TOLERANCE = 1e-3


class DatasetError(ValueError):
    """Exception raised for inconsistent preference datasets"""
    pass


class GroupId(str):
    """Name of a federated group; a non-empty string"""

    def __new__(cls, name: str) -> 'GroupId':
        if not isinstance(name, str) or not name.strip():
            raise DatasetError(f"Group name must be a non-empty string, got {name!r}")
        return super().__new__(cls, name)

    @property
    def name(self) -> str:
        return str(self)


def default_labels(k: int) -> Tuple[str, ...]:
    """
    Option letters A, B, C, ... for k options

    Args:
        k: Number of options (at most 26)

    Returns:
        Tuple[str, ...]: The first k upper-case letters
    """
    if k < 2 or k > len(string.ascii_uppercase):
        raise DatasetError(f"Cannot build letter labels for K={k}")
    return tuple(string.ascii_uppercase[:k])


@dataclass(frozen=True)
class Question:
    """A survey question with K answer options"""

    id: str
    option_labels: Tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(label) for label in self.option_labels)
        object.__setattr__(self, 'option_labels', labels)

        if not self.id:
            raise DatasetError("Question id must be non-empty")
        if len(labels) < 2:
            raise DatasetError(f"Question {self.id} needs at least 2 options")
        if len(set(labels)) != len(labels):
            raise DatasetError(f"Question {self.id} has duplicate option labels: {labels}")

    @property
    def k(self) -> int:
        """Number of options"""
        return len(self.option_labels)


@dataclass(frozen=True)
class QuestionSet:
    """
    The public part of a dataset: questions and the train/test split

    This is everything the aggregation server may see; targets stay with the groups.
    """

    questions: Tuple[Question, ...]
    train_ids: Tuple[str, ...]
    test_ids: Tuple[str, ...]

    def __post_init__(self):
        ids = [q.id for q in self.questions]
        if len(set(ids)) != len(ids):
            raise DatasetError("Question ids must be unique")
        train, test = set(self.train_ids), set(self.test_ids)
        if train & test:
            raise DatasetError(f"Train and test splits overlap: {sorted(train & test)}")
        if train | test != set(ids) or len(self.train_ids) + len(self.test_ids) != len(ids):
            raise DatasetError("Split must cover every question exactly once")

    def question(self, question_id: str) -> Question:
        """
        Look up a question by id

        Raises:
            DatasetError: If the id is unknown
        """
        for q in self.questions:
            if q.id == question_id:
                return q
        raise DatasetError(f"Unknown question id: {question_id}")

    def train_questions(self) -> List[Question]:
        return [self.question(qid) for qid in self.train_ids]

    def test_questions(self) -> List[Question]:
        return [self.question(qid) for qid in self.test_ids]


@dataclass(frozen=True)
class PreferenceDataset:
    """
    Questions plus one target distribution per (group, question)

    Attributes:
        question_set: Questions and their train/test split
        groups: Group names, in a fixed order
        targets: (group, question id) -> target distribution
    """

    question_set: QuestionSet
    groups: Tuple[GroupId, ...]
    targets: Mapping[Tuple[str, str], ProbDistribution] = field(default_factory=dict)

    def __post_init__(self):
        groups = tuple(GroupId(g) for g in self.groups)
        object.__setattr__(self, 'groups', groups)

        if not groups:
            raise DatasetError("A dataset needs at least one group")
        if len(set(groups)) != len(groups):
            raise DatasetError(f"Group names must be unique: {groups}")
        for g in groups:
            for q in self.question_set.questions:
                target = self.targets.get((g, q.id))
                if target is None:
                    raise DatasetError(f"Missing target for group {g} on question {q.id}")
                if target.k != q.k:
                    raise DatasetError(
                        f"Target for group {g} on {q.id} has {target.k} options, question has {q.k}"
                    )

    @property
    def questions(self) -> Tuple[Question, ...]:
        return self.question_set.questions

    def question(self, question_id: str) -> Question:
        return self.question_set.question(question_id)

    def target(self, group: str, question_id: str) -> ProbDistribution:
        """
        Get a group's target distribution

        Raises:
            DatasetError: If the pair is unknown
        """
        try:
            return self.targets[(group, question_id)]
        except KeyError:
            raise DatasetError(f"No target for group {group} on question {question_id}") from None

    def target_ranking(self, group: str, question_id: str) -> Ranking:
        """Ranking target derived from the distribution target"""
        return ranking_from_distribution(self.target(group, question_id))

    def slice_for_group(self, group: str) -> 'PreferenceDataset':
        """
        Get the part of the dataset a single group owns

        Args:
            group: Group name

        Returns:
            PreferenceDataset: Same questions, only this group's targets
        """
        if group not in self.groups:
            raise DatasetError(f"Unknown group: {group}")
        owned = {key: value for key, value in self.targets.items() if key[0] == group}
        return PreferenceDataset(question_set=self.question_set, groups=(GroupId(group),), targets=owned)

    def to_records(self) -> List[Dict[str, Any]]:
        """
        Convert to one JSON-ready record per question

        Returns:
            List[Dict[str, Any]]: Records with question_id, options, targets and split
        """
        train = set(self.question_set.train_ids)
        records = []
        for q in self.questions:
            records.append({
                'question_id': q.id,
                'options': list(q.option_labels),
                'targets': {g: self.targets[(g, q.id)].to_list() for g in self.groups},
                'split': 'train' if q.id in train else 'test',
            })
        return records

    @classmethod
    def from_records(cls,
                     records: Iterable[Mapping[str, Any]],
                     split_ratio: float = 0.8,
                     seed: int = 0) -> 'PreferenceDataset':
        """
        Build a dataset from question records

        Target sums within 1e-3 of one are renormalized; anything further off is rejected.
        Records without a "split" key are split by `split_ratio` using `seed`.

        Args:
            records: Objects with question_id, options, targets and optional split
            split_ratio: Fraction of questions used for training
            seed: Seed for the derived split

        Returns:
            PreferenceDataset: The validated dataset

        Raises:
            DatasetError: If a record is malformed or inconsistent
        """
        questions: List[Question] = []
        targets: Dict[Tuple[str, str], ProbDistribution] = {}
        groups: List[str] = []
        explicit_split: Dict[str, str] = {}

        for line_no, record in enumerate(records, 1):
            try:
                question_id = str(record['question_id'])
                options = tuple(record['options'])
                raw_targets = record['targets']
            except (KeyError, TypeError) as e:
                raise DatasetError(f"Record {line_no} is missing field {e}") from None

            question = Question(question_id, options)
            questions.append(question)

            if 'split' in record:
                if record['split'] not in ('train', 'test'):
                    raise DatasetError(f"Record {line_no} has invalid split {record['split']!r}")
                explicit_split[question_id] = record['split']

            for group, probs in raw_targets.items():
                if group not in groups:
                    groups.append(group)
                values = np.asarray(probs, dtype=float)
                if values.shape != (question.k,):
                    raise DatasetError(f"Record {line_no}: group {group} has {values.size} values, expected {question.k}")
                total = float(values.sum())
                if abs(total - 1.0) > LOAD_SUM_TOLERANCE:
                    raise DatasetError(f"Record {line_no}: group {group} target sums to {total}")
                try:
                    targets[(group, question_id)] = ProbDistribution.renormalize(values)
                except DistributionError as e:
                    raise DatasetError(f"Record {line_no}: {e}") from None
                if abs(total - 1.0) > 1e-12:
                    logger.debug(f"Renormalized target for {group} on {question_id} (sum {total})")

        if not questions:
            raise DatasetError("Dataset has no questions")

        ids = [q.id for q in questions]
        if explicit_split and len(explicit_split) == len(ids):
            train_ids = tuple(qid for qid in ids if explicit_split[qid] == 'train')
            test_ids = tuple(qid for qid in ids if explicit_split[qid] == 'test')
        else:
            train_ids, test_ids = split_question_ids(ids, split_ratio, seed)

        question_set = QuestionSet(tuple(questions), train_ids, test_ids)
        return cls(question_set=question_set, groups=tuple(groups), targets=targets)


def split_question_ids(ids: Sequence[str], split_ratio: float, seed: int) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    """
    Shuffle question ids and split them into train and test

    At least one question goes to train; whenever there are two or more questions
    at least one goes to test.

    Args:
        ids: Question ids
        split_ratio: Fraction for the training split, in (0, 1)
        seed: Shuffle seed

    Returns:
        Tuple of (train ids, test ids), each in original dataset order
    """
    if not 0.0 < split_ratio < 1.0:
        raise DatasetError(f"Split ratio must be in (0, 1), got {split_ratio}")
    m = len(ids)
    n_train = int(round(split_ratio * m))
    n_train = max(1, min(n_train, m - 1)) if m >= 2 else m

    rng = np.random.default_rng(seed)
    shuffled = rng.permutation(m)
    train_index = set(shuffled[:n_train].tolist())
    train_ids = tuple(qid for i, qid in enumerate(ids) if i in train_index)
    test_ids = tuple(qid for i, qid in enumerate(ids) if i not in train_index)
    return train_ids, test_ids
