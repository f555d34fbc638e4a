import json
import os

import pytest

from tdmscan import RawDocument, parse_config, shipped_registry

FIXTURES_DIR = os.path.join(os.path.dirname(__file__), "fixtures")
CORPUS_DIR = os.path.join(FIXTURES_DIR, "corpus")

EXAMPLE_CONFIG = """\
language: python
os: linux
stages: [lint, test, deploy]
jobs:
  include:
    - stage: lint
      name: Lint
      install: pip install flake8
      script: flake8 src tests
    - stage: test
      name: Unit tests
      python: "3.11"
      install: pip install -r r.txt
      script: pytest -q
    - stage: test
      name: integration tests
      python: "3.11"
      install: pip install -r req.txt
      script: pytest -q -r
    - stage: deploy
      if: tag IS present
      script: skip
      deploy:
        provider: pypi
        username: "__token__"
        password: $PYPI_TOKEN
"""


@pytest.fixture(scope="session")
def registry():
    return shipped_registry()


@pytest.fixture
def example_doc():
    return RawDocument("example/python-project", ".travis.yml", EXAMPLE_CONFIG)


@pytest.fixture
def example_config(example_doc):
    return parse_config(example_doc)


@pytest.fixture(scope="session")
def corpus_labels():
    with open(os.path.join(FIXTURES_DIR, "corpus_labels.json")) as handle:
        return json.load(handle)


def make_doc(content: str, slug: str = "acme/demo") -> RawDocument:
    return RawDocument(slug, ".travis.yml", content)
