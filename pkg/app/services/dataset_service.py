"""
Dataset Service - Synthetic preference datasets and NDJSON dataset files
"""

import json
import logging
import os
from typing import Dict, List, Tuple

import numpy as np

from ..models.dataset import (
    DatasetError,
    GroupId,
    PreferenceDataset,
    Question,
    QuestionSet,
    default_labels,
    split_question_ids,
)
from ..models.distribution import ProbDistribution
from ..models.experiment import DatasetSpec, ExperimentConfig

logger = logging.getLogger(__name__)


def group_names(n: int) -> List[str]:
    """Group names G01, G02, ..."""
    width = max(2, len(str(n)))
    return [f"G{i + 1:0{width}d}" for i in range(n)]


def generate_dataset(spec: DatasetSpec, split_ratio: float = 0.8) -> PreferenceDataset:
    """
    Build a synthetic dataset with controllable cross-group divergence

    Each group has a preference profile per option count, drawn from a sparse Dirichlet
    (profile_prior below 1), so groups lean towards different options. For every question
    a shared base distribution is drawn, and each group's target is
    (1 - eta) * base + eta * draw, where the draw follows the group's profile.
    eta = 0 gives identical groups; eta = 1 gives targets independent of each other.

    Args:
        spec: Generator settings
        split_ratio: Fraction of questions used for training

    Returns:
        PreferenceDataset: Deterministic given the generator settings
    """
    rng = np.random.default_rng(spec.seed)
    groups = group_names(spec.groups)
    eta = spec.heterogeneity

    profiles: Dict[Tuple[str, int], np.ndarray] = {}
    for g in groups:
        for k in range(spec.min_options, spec.max_options + 1):
            profiles[(g, k)] = rng.dirichlet(np.full(k, spec.profile_prior))

    width = max(4, len(str(spec.questions)))
    questions = []
    targets = {}
    for j in range(spec.questions):
        k = int(rng.integers(spec.min_options, spec.max_options + 1))
        question = Question(f"q{j + 1:0{width}d}", default_labels(k))
        questions.append(question)
        base = rng.dirichlet(np.ones(k))
        for g in groups:
            draw = rng.dirichlet(np.maximum(spec.profile_concentration * profiles[(g, k)], 1e-3))
            mixed = (1.0 - eta) * base + eta * draw
            targets[(g, question.id)] = ProbDistribution.renormalize(mixed)

    train_ids, test_ids = split_question_ids([q.id for q in questions], split_ratio, spec.seed)
    question_set = QuestionSet(tuple(questions), train_ids, test_ids)
    logger.info(f"Generated {spec.questions} questions for {spec.groups} groups (eta={eta})")
    return PreferenceDataset(question_set=question_set, groups=tuple(GroupId(g) for g in groups), targets=targets)


def load_dataset(path: str, split_ratio: float = 0.8, seed: int = 0) -> PreferenceDataset:
    """
    Read an NDJSON dataset file

    Args:
        path: One question object per line
        split_ratio: Train fraction when rows carry no split
        seed: Split seed when rows carry no split

    Returns:
        PreferenceDataset: Validated dataset

    Raises:
        DatasetError: On unreadable lines or inconsistent records
    """
    records = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}:{line_no}: invalid JSON ({e})") from None
    dataset = PreferenceDataset.from_records(records, split_ratio=split_ratio, seed=seed)
    logger.info(f"Loaded {len(dataset.questions)} questions for {len(dataset.groups)} groups from {path}")
    return dataset


def save_dataset(dataset: PreferenceDataset, path: str) -> None:
    """Write a dataset as NDJSON, one question per line, split included"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for record in dataset.to_records():
            f.write(json.dumps(record) + "\n")
    logger.info(f"Dataset written to {path}")


class DatasetService:
    """
    Service for producing the dataset of an experiment
    """

    def __init__(self):
        """Initialize the dataset service"""
        self._cache: Dict[str, PreferenceDataset] = {}
        logger.info("DatasetService initialized")

    def generate(self, spec: DatasetSpec, split_ratio: float = 0.8) -> PreferenceDataset:
        return generate_dataset(spec, split_ratio)

    def load(self, path: str, split_ratio: float = 0.8, seed: int = 0) -> PreferenceDataset:
        return load_dataset(path, split_ratio, seed)

    def save(self, dataset: PreferenceDataset, path: str) -> None:
        save_dataset(dataset, path)

    def for_experiment(self, experiment: ExperimentConfig) -> PreferenceDataset:
        """
        Load the configured file or generate the synthetic dataset

        Results are cached per dataset settings, so every run of a comparison
        shares one dataset.
        """
        cache_key = json.dumps([experiment.dataset.model_dump(mode='json'), experiment.split_ratio], sort_keys=True)
        if cache_key not in self._cache:
            spec = experiment.dataset
            if spec.path:
                dataset = self.load(spec.path, experiment.split_ratio, spec.seed)
            else:
                dataset = self.generate(spec, experiment.split_ratio)
            self._cache[cache_key] = dataset
        return self._cache[cache_key]
