import sys

from fixlab.cli import main

sys.exit(main())
