import sys

from cyclicsim.cli import main

sys.exit(main())
