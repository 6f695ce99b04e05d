import sys

from dpkme.cli import main

sys.exit(main())
