import sys

from evdr.cli import main

sys.exit(main())
