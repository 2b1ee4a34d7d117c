"""Model identifiers for a weight-backed deployment.

The bundled `DeterministicEngine` reports its own rule-based identifiers; a
production engine loading real checkpoints is expected to serve this catalog
and report these identifiers through `/health` and per-response `model_id`
fields. Substituting a model is allowed — the identifiers are provenance, so
any swap must be reflected here and will show up in downstream reports.
"""

PRODUCTION_MODELS = {
    "nli": "MoritzLaurer/DeBERTa-v3-large-mnli-fever-anli-ling-wanli",
    "embed": "intfloat/multilingual-e5-large",
    "punctuate": "oliverguhr/fullstop-punctuation-multilang-large",
    "truecase": "bert-base-cased",
    "coref_propose": "sapienzanlp/maverick-mes-ontonotes",
    "coref_select": "meta-llama/Llama-3.1-8B-Instruct",
    "rewrite": "Qwen/Qwen2.5-14B-Instruct",
    "cross_encode": "BAAI/bge-reranker-large",
}
