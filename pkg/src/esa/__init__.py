"""Entity summarization for RDF knowledge graphs.

Pipeline pieces: N-Triples ingestion (esa.kg), translation-embedding
pretraining (esa.transe), a BiLSTM ranker with supervised attention
(esa.model, esa.gold), and F-measure/MAP evaluation under cross-validation
(esa.evaluation). The `esa` console script wires them together.
"""

__version__ = "0.1.0"
