import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from query_agent.core.config import DEMO_CORPUS_DIR  # noqa: E402
from query_agent.core.settings import CliConfig  # noqa: E402
from query_agent.gateway.model_gateway import ModelGateway  # noqa: E402
from query_agent.models.corpus_models import TextChunk  # noqa: E402
from query_agent.services.graph_service import save_graph  # noqa: E402
from query_agent.services.pipeline_service import index_corpus, load_structured_tables  # noqa: E402

BACKEND_ENV_VARS = (
    "MODEL_BACKEND",
    "MODEL_ENDPOINT",
    "MODEL_NAME",
    "MODEL_EMBEDDING_NAME",
    "MODEL_MAX_IN_FLIGHT",
    "MODEL_API_KEY",
    "QUERY_AGENT_LOG_LEVEL",
    "QUERY_AGENT_VERBOSE",
    "QUERY_AGENT_GRAPH",
    "QUERY_AGENT_CORPUS",
)


@pytest.fixture(autouse=True)
def _offline_backend(monkeypatch):
    for name in BACKEND_ENV_VARS:
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def gateway():
    return ModelGateway()


@pytest.fixture(scope="session")
def demo_index():
    return index_corpus(DEMO_CORPUS_DIR, CliConfig(), ModelGateway())


@pytest.fixture(scope="session")
def demo_graph(demo_index):
    return demo_index.graph


@pytest.fixture(scope="session")
def demo_graph_file(demo_graph, tmp_path_factory):
    path = tmp_path_factory.mktemp("graph") / "demo.hetgraph.jsonl"
    save_graph(demo_graph, path)
    return path


@pytest.fixture(scope="session")
def demo_tables():
    tables, errors = load_structured_tables(DEMO_CORPUS_DIR)
    assert errors == ()
    return tables


def make_chunk(text, chunk_id="doc#0", doc_id="doc"):
    return TextChunk(chunk_id=chunk_id, doc_id=doc_id, ordinal=0, span=(0, len(text)), text=text)
