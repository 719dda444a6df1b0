from .bm25 import BM25Index, IndexStats, build_sparse_index, tokenize
from .dense import DenseIndex, build_embedding_cache
from .fusion import rrf_fuse
from .pool import RETRIEVER_KINDS, Retriever, load_pool, save_pool
from .types import RankedPassage, RetrievalPool, rank_by_score

__all__ = [
    "BM25Index",
    "DenseIndex",
    "IndexStats",
    "RETRIEVER_KINDS",
    "RankedPassage",
    "RetrievalPool",
    "Retriever",
    "build_embedding_cache",
    "build_sparse_index",
    "load_pool",
    "rank_by_score",
    "rrf_fuse",
    "save_pool",
    "tokenize",
]
