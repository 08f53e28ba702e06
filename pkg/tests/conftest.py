"""
Shared test fixtures for the federated alignment simulator
"""

import pytest

from app.models.dataset import PreferenceDataset, Question, QuestionSet
from app.models.distribution import ProbDistribution
from app.models.experiment import AppaConfig, DatasetSpec, ExperimentConfig, PolicyConfig, PPOConfig
from app.services import ServiceRegistry
from app.services.dataset_service import generate_dataset


@pytest.fixture(scope="function", autouse=True)
def clean_registry():
    """Every test starts and ends with an empty service registry"""
    ServiceRegistry.clear()
    yield
    ServiceRegistry.clear()


@pytest.fixture
def appa_config():
    return AppaConfig()


@pytest.fixture
def small_spec():
    """3 groups, 10 questions with 2-4 options"""
    return DatasetSpec(groups=3, questions=10, min_options=2, max_options=4, heterogeneity=0.7, seed=1)


@pytest.fixture
def small_dataset(small_spec):
    return generate_dataset(small_spec, split_ratio=0.8)


@pytest.fixture
def opposing_dataset():
    """Two groups with opposite point-mass targets on one K=2 question, plus one test question"""
    questions = (Question("q1", ("A", "B")), Question("q2", ("A", "B")))
    question_set = QuestionSet(questions, train_ids=("q1",), test_ids=("q2",))
    targets = {
        ("G01", "q1"): ProbDistribution((1.0, 0.0)),
        ("G02", "q1"): ProbDistribution((0.0, 1.0)),
        ("G01", "q2"): ProbDistribution((1.0, 0.0)),
        ("G02", "q2"): ProbDistribution((0.0, 1.0)),
    }
    return PreferenceDataset(question_set=question_set, groups=("G01", "G02"), targets=targets)


@pytest.fixture
def fast_experiment(small_spec, tmp_path):
    """A few-iteration run on the small dataset with a tabular-scale learning rate"""
    return ExperimentConfig(
        dataset=small_spec,
        ppo=PPOConfig(learning_rate=0.3),
        policy=PolicyConfig(table_key='question'),
        iterations=5,
        seed=0,
        output_dir=str(tmp_path / "runs"),
        log_every=1,
    )
