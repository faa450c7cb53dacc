import sys

from covercert.cli import main

sys.exit(main())
