import sys

from etherphase.cli import main

sys.exit(main())
