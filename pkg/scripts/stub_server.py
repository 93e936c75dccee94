"""Serve a local chat-completions stub until interrupted.

    python3 scripts/stub_server.py --mode echo-image --port 8765

Point a run config's ``[model] base_url`` at the printed URL.
"""

from __future__ import annotations

import argparse
import time

from chemeval.stub import StubServer, constant, echo_image, echo_text

MODES = {
    "echo-text": echo_text,
    "echo-image": echo_image,
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", choices=[*MODES, "constant"], default="echo-text")
    ap.add_argument("--text", default="xyz", help="reply for --mode constant")
    ap.add_argument("--port", type=int, default=8765)
    ap.add_argument("--delay", type=float, default=0.0, help="seconds per request")
    args = ap.parse_args()

    responder = constant(args.text) if args.mode == "constant" else MODES[args.mode]
    with StubServer(responder, args.delay, args.port) as server:
        print(server.base_url, flush=True)
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            pass


if __name__ == "__main__":
    main()
