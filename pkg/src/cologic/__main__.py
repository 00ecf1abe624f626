#
#  Copyright © 2023 The Cologic contributors
#
#  This file is part of Cologic.
#
#  Cologic is free software under terms of the GNU Lesser
#  General Public License version 3 (LGPLv3) as published by the Free
#  Software Foundation. See the file README.rst for copying conditions.
#
from cologic.cli import main

main()
