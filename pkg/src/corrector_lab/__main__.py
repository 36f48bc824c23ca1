import sys

from corrector_lab.cli import main

sys.exit(main())
