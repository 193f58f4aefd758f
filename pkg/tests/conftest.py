import json

import pytest

from raglab.engine import Engine, EngineConfig
from raglab.llm import LlmBackendConfig

# planted world: each passage has distinctive tokens; questions repeat those
# tokens so both BM25 and the mock dense embedder rank the gold passage first
PLANTED = [
    ("101", "Zephyr", "zephyr quokka violet meadow", "quokka"),
    ("102", "Borealis", "borealis saffron indigo ridge", "saffron"),
    ("103", "Cascade", "cascade marmot ember hollow", "marmot"),
    ("104", "Dunes", "dunes falcon cobalt mirage", "falcon"),
    ("105", "Estuary", "estuary heron sienna shoal", "heron"),
]


def planted_corpus_file(tmp_path):
    rows = [{"wiki_id": w, "title": t, "text": x} for w, t, x, _ in PLANTED]
    path = tmp_path / "passages.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return path


def planted_dataset_file(tmp_path):
    records = []
    for i, (wiki_id, title, text, gold) in enumerate(PLANTED):
        head = " ".join(text.split()[:3])
        records.append({
            "id": f"q{i}",
            "input": f"what is found in the {head}",
            "output": [{"answer": gold, "provenance": [{"wikipedia_id": wiki_id}]}],
        })
    path = tmp_path / "dataset.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n")
    return path


def planted_llm_config(**overrides):
    # match on the distinctive head tokens appearing in the rendered prompt
    rules = [(" ".join(text.split()[:3]), gold) for _, _, text, gold in PLANTED]
    return LlmBackendConfig(kind="mock", mock_rules=rules, **overrides)


def open_book_chain_doc(chain_id="open", retriever_ref="planted.bm25"):
    return {
        "chain_id": chain_id,
        "name": "retrieve then generate",
        "dataset_tag": "planted",
        "actions": [
            {"operator": "Retriever",
             "template": {"mode": "literal", "source": "{question}"},
             "retriever_ref": retriever_ref, "top_k": 3},
            {"operator": "LLM",
             "template": {"mode": "literal",
                          "source": ('Referring to the following document, answer '
                                     '"{question}" in 5 words or less.\n\n'
                                     "{response[0]}\n\nAnswer: ")}},
        ],
    }


def rewrite_chain_doc(chain_id="rewrite", retriever_ref="planted.bm25"):
    return {
        "chain_id": chain_id,
        "name": "retrieve, rewrite, answer",
        "dataset_tag": "planted",
        "actions": [
            {"operator": "Retriever",
             "template": {"mode": "literal", "source": "{question}"},
             "retriever_ref": retriever_ref, "top_k": 3},
            {"operator": "LLM",
             "template": {"mode": "literal",
                          "source": ("Please rewrite the following question "
                                     "clearly.\n\n{question}\n\n"
                                     "Rewritten question: ")}},
            {"operator": "LLM",
             "template": {"mode": "literal",
                          "source": ('Referring to the following document, answer '
                                     '"{response[1]}" in 5 words or less.\n\n'
                                     "{response[0]}\n\nAnswer: ")}},
        ],
    }


@pytest.fixture
def workspace(tmp_path):
    """Engine over a planted corpus with bm25 + flat indices, chains, dataset."""
    config = EngineConfig(root=str(tmp_path / "data"), llm=planted_llm_config(),
                          eval_concurrency=2)
    engine = Engine(config)
    corpus_path = planted_corpus_file(tmp_path)
    dataset_path = planted_dataset_file(tmp_path)
    engine.ingest(corpus_path, "planted")
    engine.build_index("planted", "bm25")
    engine.build_index("planted", "flat")
    engine.register_dataset("planted", dataset_path)
    from raglab.chains import ChainSpec
    engine.save_chain(ChainSpec.from_dict(open_book_chain_doc()))
    engine.save_chain(ChainSpec.from_dict(
        rewrite_chain_doc(retriever_ref="planted.flat")))
    return {"engine": engine, "corpus_path": corpus_path,
            "dataset_path": dataset_path, "root": tmp_path / "data"}
