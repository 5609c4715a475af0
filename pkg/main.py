"""
coughgan 启动入口

运行此模块执行流水线子命令，例如:
    python main.py preprocess --config config/config.json
"""

import sys

from app.cli import main

if __name__ == "__main__":
    sys.exit(main())
