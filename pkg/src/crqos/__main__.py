import sys

from crqos.cli import main

sys.exit(main())
