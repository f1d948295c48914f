import sys

from jetprop.cli import main

sys.exit(main())
