import argparse
import sys

from .adapters import make_adapter
from .server import serve_stdio, serve_tcp


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="genplugin", description="Generator protocol reference server.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_serve = sub.add_parser("serve", help="serve the protocol until the transport closes")
    p_serve.add_argument("--adapter", default="echo", choices=("echo", "fixed", "shuffle"))
    p_serve.add_argument("--fixture", default=None, help="candidate fixture file for fixed/shuffle")
    p_serve.add_argument("--transport", default="stdio", help="stdio or tcp:<port>")
    args = parser.parse_args(argv)

    adapter = make_adapter(args.adapter, args.fixture)
    if args.transport == "stdio":
        serve_stdio(adapter)
        return 0
    if args.transport.startswith("tcp:"):
        serve_tcp(adapter, int(args.transport[len("tcp:"):]))
        return 0
    print(f"error: unknown transport {args.transport!r}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
