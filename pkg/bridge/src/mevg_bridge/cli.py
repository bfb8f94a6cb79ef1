"""Command-line entry point for the model server.

    mevg-bridge --listen 127.0.0.1:9100 --backend toy
    mevg-bridge --listen 0.0.0.0:9100 --backend weights \
        --model-path /models/text-to-video --device cuda:0

The engine points --bridge-addr at the listen address; dims travel through
the hello handshake, so engine and server never have to agree on them out of
band.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .backends import BackendError, ToyGaussianBackend, WeightsBackend
from .server import BridgeServer


def _parse_addr(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"listen address must be host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def _parse_dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"latent dims must be comma-separated ints, got {text!r}")
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError(f"latent dims must be three positive ints, got {text!r}")
    return dims


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mevg-bridge", description="Model server for the mevg engine.")
    parser.add_argument("--listen", type=_parse_addr, default=("127.0.0.1", 9100),
                        help="host:port to listen on (default 127.0.0.1:9100)")
    parser.add_argument("--backend", choices=["toy", "weights"], default="toy")
    parser.add_argument("--model-path", help="local pipeline directory (weights backend)")
    parser.add_argument("--device", default="cpu", help="torch device for the weights backend")
    parser.add_argument("--frames", type=int, default=16, help="native clip length to advertise")
    parser.add_argument("--latent-dims", type=_parse_dims, default=(4, 32, 32),
                        help="c,h,w of one frame latent (toy backend)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if args.backend == "toy":
        backend = ToyGaussianBackend(frame_shape=args.latent_dims, frames=args.frames)
    else:
        if not args.model_path:
            print("the weights backend needs --model-path", file=sys.stderr)
            return 2
        backend = WeightsBackend(args.model_path, device=args.device, frames=args.frames)
    try:
        backend.capabilities()  # load weights up front so failures happen before listen
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 1
    host, port = args.listen
    server = BridgeServer(backend, host=host, port=port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
