"""
Integration fixtures: click runner and throwaway output directories
"""

import pytest
from click.testing import CliRunner


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "run"
    return path
