"""belforge: build a filtered biomedical ontology, compile a weakly labeled
entity-linking corpus from a wiki dump, train string-embedding models by
self-alignment contrastive learning, and link mentions via PCA-compressed
nearest-neighbor search.
"""

__version__ = "0.1.0"
