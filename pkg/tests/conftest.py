import pytest

from dgselect.selection import CheckpointRecord, RunRecord
from dgselect.tradeoff import DiscreteDGProblem


def canonical_problem() -> DiscreteDGProblem:
    """2x2x2 instance: identical uniform inputs, unseen labels mostly flipped,
    identity classifier, 0-1 loss.  Small enough for the exhaustive grid."""
    return DiscreteDGProblem(
        n_x=2,
        n_z=2,
        n_y=2,
        p_s_x=[0.5, 0.5],
        p_u_x=[0.5, 0.5],
        label_s=[[1.0, 0.0], [0.0, 1.0]],
        label_u=[[0.2, 0.8], [0.8, 0.2]],
        classifier_g=[0, 1],
        loss_l=[[0.0, 1.0], [1.0, 0.0]],
    )


def identical_domains_problem() -> DiscreteDGProblem:
    return DiscreteDGProblem(
        n_x=2,
        n_z=2,
        n_y=2,
        p_s_x=[0.4, 0.6],
        p_u_x=[0.4, 0.6],
        label_s=[[0.9, 0.1], [0.3, 0.7]],
        label_u=[[0.9, 0.1], [0.3, 0.7]],
        classifier_g=[0, 1],
        loss_l=[[0.0, 1.0], [1.0, 0.0]],
    )


def random_problem(rng, n_x=None, n_z=None, n_y=None) -> DiscreteDGProblem:
    n_x = n_x or int(rng.integers(2, 4))
    n_z = n_z or int(rng.integers(2, 4))
    n_y = n_y or int(rng.integers(2, 4))

    def simplex(n, size):
        raw = rng.random((size, n)) + 0.05
        return raw / raw.sum(axis=1, keepdims=True)

    return DiscreteDGProblem(
        n_x=n_x,
        n_z=n_z,
        n_y=n_y,
        p_s_x=simplex(n_x, 1)[0],
        p_u_x=simplex(n_x, 1)[0],
        label_s=simplex(n_y, n_x),
        label_u=simplex(n_y, n_x),
        classifier_g=rng.integers(0, n_y, size=n_z),
        loss_l=rng.random((n_y, n_y)) * 2.0,
    )


def random_channel(rng, n_x: int, n_z: int):
    raw = rng.random((n_x, n_z)) + 1e-3
    return raw / raw.sum(axis=1, keepdims=True)


@pytest.fixture
def problem_small():
    return canonical_problem()


def three_step_run() -> RunRecord:
    """Hand-arithmetic fixture: combined loss picks step 300, accuracy picks 200."""
    return RunRecord(
        run_id="run0",
        checkpoints=(
            CheckpointRecord("run0", 100, ce=0.90, mmd=0.10, acc=0.70),
            CheckpointRecord("run0", 200, ce=0.50, mmd=0.80, acc=0.80),
            CheckpointRecord("run0", 300, ce=0.60, mmd=0.20, acc=0.75),
        ),
    )


def random_runs(rng, n_runs=4, max_checkpoints=6) -> list[RunRecord]:
    runs = []
    for r in range(n_runs):
        n_cp = int(rng.integers(1, max_checkpoints + 1))
        cps = tuple(
            CheckpointRecord(
                run_id=f"run{r}",
                step=(i + 1) * 100,
                ce=float(rng.random() * 3.0),
                mmd=float(rng.random() * 2.0),
                acc=float(rng.random()),
                test_acc=float(rng.random()),
            )
            for i in range(n_cp)
        )
        runs.append(RunRecord(run_id=f"run{r}", checkpoints=cps))
    return runs
