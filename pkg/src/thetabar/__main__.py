import sys

from thetabar.cli import main

sys.exit(main())
