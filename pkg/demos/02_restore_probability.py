# The running restore-probability estimate that drives scheduling.
#
# After every fragment saved, the k+1 entry table answers "with what
# probability could this item be rebuilt right now?" in k multiply-adds.
# Run: python demos/02_restore_probability.py

from oppbak import DataItem, VersionIndex, composite_success, new_table

# an item split 4 ways needing any 2 back
table = new_table(k=2)
print(f"fresh table: {table.table}  success={table.success}")

for i, p in enumerate([0.6, 0.8, 0.5, 0.9], start=1):
    table = table.add_fragment(p)
    print(f"after save {i} (terminal retrievable p={p}): success={table.success:.4f}")

# -- same-terminal saves share one fate ---------------------------------------
one_basket = new_table(2).add_batch_same_terminal(0.7, 2)
two_baskets = new_table(2).add_fragment(0.7).add_fragment(0.7)
print(f"\ntwo fragments, ONE terminal, one session: success={one_basket.success:.4f}")
print(f"two fragments, TWO terminals:              success={two_baskets.success:.4f}")
print("(needing both, correlation helps; needing any one, it would hurt)")

spread = new_table(1).add_fragment(0.7).add_fragment(0.7)
bunched = new_table(1).add_batch_same_terminal(0.7, 2)
print(f"k=1: two baskets {spread.success:.4f} vs one basket {bunched.success:.4f}")

# -- dependencies multiply in -----------------------------------------------
# a mail thread: the reply is useless without the two older mails
index = VersionIndex()
older = DataItem(id="mail-1", owner="me", size_bytes=900, priority=0.9)
middle = DataItem(id="mail-2", owner="me", size_bytes=700, priority=0.9,
                  temporal_deps=(("mail-1", 1),))
reply = DataItem(id="mail-3", owner="me", size_bytes=500, priority=0.9,
                 temporal_deps=(("mail-2", 1),))
for item in (older, middle, reply):
    index.register(item)

tables = {
    ("mail-1", 1): new_table(1).add_fragment(0.9),
    ("mail-2", 1): new_table(1).add_fragment(0.8),
    ("mail-3", 1): new_table(1).add_fragment(0.95),
}
print(f"\nreply alone:      {tables[('mail-3', 1)].success:.4f}")
print(f"reply with chain: {composite_success(reply, tables, index):.4f}"
      f"  (= 0.95 * 0.8 * 0.9)")

index.mark_on_server(("mail-1", 1))
print(f"oldest mail reaches the server -> {composite_success(reply, tables, index):.4f}")
