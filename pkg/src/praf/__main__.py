from praf.cli import main
import sys

sys.exit(main())
