import json

import pytest

from sleepstager.cli import main as cli_main
from sleepstager.synth import SyntheticSpec, generate_dataset


def base_config(data_dir, out_dir, **overrides):
    cfg = {
        "dataset": {
            "name": "synthetic",
            "recordings": str(data_dir / "*.edf"),
            "hypnograms": "csv",
        },
        "evaluation": {"protocol": "LFS", "k": 3},
        "output_dir": str(out_dir),
    }
    for key, value in overrides.items():
        section, _, field = key.partition(".")
        if field:
            cfg.setdefault(section, {})[field] = value
        else:
            cfg[section] = value
    return cfg


def write_config(path, cfg):
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """Six synthetic recordings (3 subjects x 2 nights) with CSV hypnograms."""
    root = tmp_path_factory.mktemp("synthdata")
    paths = generate_dataset(
        root, SyntheticSpec(n_subjects=3, recordings_per_subject=2, epochs=40, seed=7)
    )
    return root, paths


@pytest.fixture(scope="session")
def extracted(synth_root, tmp_path_factory):
    """The synthetic dataset extracted once for all CLI-level tests."""
    data_dir, _ = synth_root
    out_dir = tmp_path_factory.mktemp("out")
    cfg_path = write_config(out_dir / "config.json", base_config(data_dir, out_dir))
    assert cli_main(["extract", "--config", str(cfg_path)]) == 0
    return cfg_path, out_dir
