"""Entry point for the fracdiff command line."""
import sys

from fracdiff.cli import run_cli


def main() -> int:
    return run_cli(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
