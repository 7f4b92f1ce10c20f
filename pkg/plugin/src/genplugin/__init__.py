"""Reference implementation of the generator wire protocol.

One JSON request per line in, one JSON response per line out:

    request  {"prompt": str, "n": int, "max_tokens": int, "mode": "argmax"|"sample", "seed": int}
    response {"candidates": [str, ...]}  or  {"error": str}

Ships deterministic stub adapters for testing pipelines that consume the
protocol, plus a hook for wrapping a real language model client.
"""

__version__ = "0.1.0"

from .adapters import Adapter, CallableAdapter, EchoAdapter, FixedListAdapter, SeededShuffleAdapter
from .server import serve, serve_stdio, serve_tcp

__all__ = [
    "Adapter",
    "CallableAdapter",
    "EchoAdapter",
    "FixedListAdapter",
    "SeededShuffleAdapter",
    "serve",
    "serve_stdio",
    "serve_tcp",
]
