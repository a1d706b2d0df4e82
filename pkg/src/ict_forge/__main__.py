from ict_forge.cli import main

raise SystemExit(main())
