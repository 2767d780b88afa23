from exgov.cli import main

raise SystemExit(main())
