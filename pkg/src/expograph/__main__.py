import sys

from expograph.cli import main

sys.exit(main())
