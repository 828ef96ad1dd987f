# ctxnmt/internal/__init__.py
# makes `ctxnmt.internal` a package
