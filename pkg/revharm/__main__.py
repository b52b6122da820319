# SPDX-License-Identifier: MIT
# Copyright (C) 2026 The revharm authors

import sys

from revharm.cli import main

sys.exit(main())
