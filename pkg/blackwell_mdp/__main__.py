import sys

from blackwell_mdp.main import main

sys.exit(main())
