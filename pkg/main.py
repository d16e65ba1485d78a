import sys

from query_agent.cli import main


if __name__ == "__main__":
    # 日本語: `python main.py ...` でも CLI を起動 / English: `python main.py ...` runs the CLI too
    sys.exit(main())
