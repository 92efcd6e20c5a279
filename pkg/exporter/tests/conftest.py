import json

import numpy as np
import pytest
import torch

from dgexport.reference import ReferenceMLP, save_checkpoint

INPUT_DIM = 6
HIDDEN_DIM = 12
N_CLASSES = 3
STEPS = (100, 200, 300)
DOMAINS = ("env0", "env1")


def _make_domain(rng, n=40):
    features = rng.normal(size=(n, INPUT_DIM)).astype(np.float32)
    labels = rng.integers(0, N_CLASSES, size=n).astype(np.int64)
    return features, labels


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """A tiny trained run: 3 saved checkpoints, 2 validation domains, a spec file."""
    root = tmp_path_factory.mktemp("pipeline")
    rng = np.random.default_rng(0)
    torch.manual_seed(0)

    domains = {}
    for domain_id in DOMAINS:
        feats, labels = _make_domain(rng)
        path = root / f"{domain_id}.npz"
        np.savez(path, features=feats, labels=labels)
        domains[domain_id] = (str(path), feats, labels)

    test_feats, test_labels = _make_domain(rng)
    test_path = root / "unseen.npz"
    np.savez(test_path, features=test_feats, labels=test_labels)

    train_feats, train_labels = _make_domain(rng, n=120)
    x = torch.from_numpy(train_feats)
    y = torch.from_numpy(train_labels)

    model = ReferenceMLP(INPUT_DIM, HIDDEN_DIM, N_CLASSES)
    opt = torch.optim.SGD(model.parameters(), lr=0.1)
    checkpoints = []
    step = 0
    for target in STEPS:
        while step < target:
            opt.zero_grad()
            loss = torch.nn.functional.cross_entropy(model(x), y)
            loss.backward()
            opt.step()
            step += 1
        path = root / f"ckpt{target}.pt"
        save_checkpoint(model, str(path))
        checkpoints.append({"step": target, "path": str(path)})

    output = root / "exported.jsonl"
    spec_doc = {
        "run_id": "reference_run",
        "checkpoints": checkpoints,
        "domains": [{"domain_id": d, "data": domains[d][0]} for d in DOMAINS],
        "test_data": str(test_path),
        "output": str(output),
    }
    spec_path = root / "spec.json"
    spec_path.write_text(json.dumps(spec_doc, indent=2))
    return {
        "root": root,
        "spec_path": str(spec_path),
        "spec_doc": spec_doc,
        "output": str(output),
        "domains": domains,
    }
