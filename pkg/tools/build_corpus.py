"""Regenerate the corpus apps other than blood_pressure (which is hand-written)."""

import json, copy, os

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "corpus")


def page(id, title, label, vec, topics, widgets, touched=(), parent=None):
    d = {"id": id, "title": title, "goal_label": label, "goal_vector": vec, "goal_topics": topics,
         "touched_vars": list(touched), "widgets": widgets}
    if parent:
        d["parent"] = parent
    return d


def w(id, text, topics, **kw):
    d = {"id": id, "text": text, "topics": topics}
    d.update(kw)
    return d


def rule(id, page, widget, target=None, action="click", guard=None, updates=(), events=(), op=None):
    d = {"id": id, "page": page, "widget": widget, "action": action}
    if target:
        d["target"] = target
    if guard:
        d["guard"] = guard
    if updates:
        d["updates"] = list(updates)
    if events:
        d["events"] = list(events)
    if op:
        d["abstract_op"] = {"tag": op[0], "args": op[1]}
    return d


def S(var, value):
    return {"set": var, "value": value}


def step(page, widget, action="click", text=None):
    d = {"page": page, "widget": widget}
    if action != "click":
        d["action"] = action
    if text is not None:
        d["text"] = text
    return d


def dump(name, doc):
    with open(os.path.join(OUT, name), "w") as fh:
        json.dump(doc, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


# ---------------------------------------------------------------------------
# notes: hide/show of a preview pane leaves a stale cache; "new" then crashes
# dims: [nav, notes, preview, settings]
# ---------------------------------------------------------------------------
notes = {
    "name": "notes",
    "embedding_dim": 4,
    "main_page": "home",
    "vars": [
        {"name": "note_list", "kind": "set_of", "universe": ["todo", "idea"]},
        {"name": "draft_title", "kind": "enum", "values": ["none", "todo", "idea"]},
        {"name": "draft_body", "kind": "enum", "values": ["none", "text"]},
        {"name": "pinned", "kind": "boolean"},
        {"name": "visible__notes__pane", "kind": "boolean"},
        {"name": "preview_cache", "kind": "enum", "values": ["empty", "fresh", "stale"]},
    ],
    "initial": {"note_list": [], "draft_title": "none", "draft_body": "none", "pinned": False,
                "visible__notes__pane": False, "preview_cache": "empty"},
    "pages": [
        page("home", "Home", "App Navigation", [1, 0, 0, 0.2], ["navigation"], [
            w("notes", "Notes", ["navigation"]),
            w("settings", "Settings", ["navigation"]),
        ]),
        page("notes", "Notes", "Note Editing", [0, 1, 0.3, 0], ["notes"], [
            w("new", "New note", ["notes"]),
            w("preview", "Show preview", ["notes", "preview"]),
            w("pane", "Preview pane", ["preview"], visible=False),
            w("close", "×", ["navigation"], kind="icon"),
        ], touched=["note_list"], parent="home"),
        page("note_edit", "Edit note", "Note Editing", [0, 0.9, 0, 0], ["notes"], [
            w("title", "Title", ["notes"], kind="input", default_input="todo", order_independent=True),
            w("body", "Body", ["notes"], kind="input", default_input="text", order_independent=True),
            w("pin", "Pin", ["notes"], kind="checkbox", optional=True),
            w("save", "Save", ["notes"], enabled_when="draft_title != \"none\""),
        ], touched=["note_list"], parent="notes"),
        page("settings", "Settings", "App Navigation", [0.9, 0, 0, 0.4], ["navigation"], [
            w("home", "Home", ["navigation"]),
        ], parent="home"),
    ],
    "rules": [
        rule("home_notes", "home", "notes", "notes"),
        rule("home_settings", "home", "settings", "settings"),
        rule("settings_home", "settings", "home", "home"),
        rule("notes_close", "notes", "close", "home"),
        rule("notes_new_ok", "notes", "new", "note_edit", guard="preview_cache != \"stale\""),
        rule("notes_new_stale", "notes", "new", guard="preview_cache == \"stale\"",
             events=[{"crash": "NullPointerException in PreviewAdapter.bind"}]),
        rule("notes_preview_show", "notes", "preview", guard="visible__notes__pane == false",
             updates=[S("visible__notes__pane", True), S("preview_cache", "fresh")]),
        rule("notes_preview_hide", "notes", "preview", guard="visible__notes__pane == true",
             updates=[S("visible__notes__pane", False), S("preview_cache", "stale")]),
        rule("notes_pane", "notes", "pane"),
        rule("edit_title", "note_edit", "title", action="input", updates=[S("draft_title", "{input}")]),
        rule("edit_body", "note_edit", "body", action="input", updates=[S("draft_body", "{input}")]),
        rule("edit_pin_on", "note_edit", "pin", action="toggle_on", updates=[S("pinned", True)]),
        rule("edit_pin_off", "note_edit", "pin", action="toggle_off", updates=[S("pinned", False)]),
        rule("edit_save", "note_edit", "save", "notes",
             updates=[{"insert": "note_list", "elem": "{draft_title}"}, S("draft_title", "none"),
                      S("draft_body", "none"), S("pinned", False)],
             op=("add_note", {"title": "{draft_title}"})),
    ],
    "effects": [
        {"abstract_op": "add_note", "postcondition": "\"{title}\" in note_list",
         "description": "a saved note appears in the list"},
    ],
    "bootstrap": [
        step("home", "notes"),
        step("notes", "new"),
        step("note_edit", "title", "input", "todo"),
        step("note_edit", "body", "input", "text"),
        step("note_edit", "save"),
        step("notes", "close"),
        step("home", "settings"),
        step("settings", "home"),
    ],
    "injected_bugs": [
        {"id": "stale_preview_crash", "kind": "crash", "page": "notes", "widget": "new",
         "description": "Hiding the preview pane leaves a stale adapter; creating a note then crashes"},
    ],
}
dump("notes.app", notes)
dump("notes_reference.app", {
    "base": "notes.app", "name": "notes_reference", "injected_bugs": [],
    "replace_rules": [
        rule("notes_preview_hide", "notes", "preview", guard="visible__notes__pane == true",
             updates=[S("visible__notes__pane", False), S("preview_cache", "empty")]),
    ],
})

# ---------------------------------------------------------------------------
# contacts: renaming a contact does not rename an existing message thread,
# so the next message goes to the old name
# dims: [nav, contacts, messaging]
# ---------------------------------------------------------------------------
NAMES = ["Al", "Bo"]
contacts = {
    "name": "contacts",
    "embedding_dim": 3,
    "main_page": "home",
    "vars": [
        {"name": "contact_name", "kind": "enum", "values": NAMES},
        {"name": "draft_name", "kind": "enum", "values": ["none"] + NAMES},
        {"name": "thread_name", "kind": "enum", "values": ["none"] + NAMES},
        {"name": "last_recipient", "kind": "enum", "values": ["none"] + NAMES},
    ],
    "initial": {"contact_name": "Al", "draft_name": "none", "thread_name": "none", "last_recipient": "none"},
    "pages": [
        page("home", "Home", "App Navigation", [1, 0, 0], ["navigation"], [
            w("contacts", "Contacts", ["navigation"]),
            w("messages", "Messages", ["navigation"]),
        ]),
        page("contacts", "Contacts", "Contact Management", [0, 1, 0], ["contacts"], [
            w("edit", "Edit contact", ["contacts"]),
            w("close", "×", ["navigation"], kind="icon"),
        ], touched=["contact_name"], parent="home"),
        page("contact_edit", "Edit contact", "Contact Management", [0.1, 1, 0.2], ["contacts"], [
            w("name", "Name", ["contacts"], kind="input", default_input="Bo"),
            w("save", "Save", ["contacts"], enabled_when="draft_name != \"none\""),
        ], touched=["contact_name", "thread_name"], parent="contacts"),
        page("messages", "Messages", "Messaging", [0, 0.2, 1], ["messaging"], [
            w("send", "Send hello", ["messaging"]),
            w("close", "×", ["navigation"], kind="icon"),
        ], touched=["contact_name", "thread_name", "last_recipient"], parent="home"),
    ],
    "rules": [
        rule("home_contacts", "home", "contacts", "contacts"),
        rule("home_messages", "home", "messages", "messages"),
        rule("contacts_close", "contacts", "close", "home"),
        rule("contacts_edit", "contacts", "edit", "contact_edit"),
        rule("edit_name", "contact_edit", "name", action="input", updates=[S("draft_name", "{input}")]),
        rule("edit_save_nothread", "contact_edit", "save", "contacts", guard="thread_name == \"none\"",
             updates=[S("contact_name", "{draft_name}"), S("draft_name", "none")],
             op=("update_contact", {"name": "{draft_name}"})),
        rule("edit_save_thread", "contact_edit", "save", "contacts", guard="thread_name != \"none\"",
             updates=[S("contact_name", "{draft_name}"), S("draft_name", "none")],
             op=("update_contact", {"name": "{draft_name}"})),
        rule("messages_send_new", "messages", "send", guard="thread_name == \"none\"",
             updates=[S("thread_name", "{contact_name}"), S("last_recipient", "{contact_name}")],
             op=("send_message", {"to": "{contact_name}"})),
        rule("messages_send_thread", "messages", "send", guard="thread_name != \"none\"",
             updates=[S("last_recipient", "{thread_name}")],
             op=("send_message", {"to": "{contact_name}"})),
        rule("messages_close", "messages", "close", "home"),
    ],
    "effects": [
        {"abstract_op": "update_contact", "postcondition": "contact_name == \"{name}\"",
         "description": "the contact carries its new name"},
        {"abstract_op": "send_message", "postcondition": "last_recipient == \"{to}\"",
         "description": "a message reaches the contact as currently named"},
    ],
    "bootstrap": [
        step("home", "messages"),
        step("messages", "send"),
        step("messages", "close"),
        step("home", "contacts"),
        step("contacts", "edit"),
        step("contact_edit", "name", "input", "Bo"),
        step("contact_edit", "save"),
        step("contacts", "close"),
    ],
    "injected_bugs": [
        {"id": "stale_thread_name", "kind": "functional", "op": "send_message",
         "description": "Renaming a contact keeps the old name on its message thread"},
    ],
}
dump("contacts.app", contacts)
dump("contacts_reference.app", {
    "base": "contacts.app", "name": "contacts_reference", "injected_bugs": [],
    "replace_rules": [
        rule("edit_save_thread", "contact_edit", "save", "contacts", guard="thread_name != \"none\"",
             updates=[S("contact_name", "{draft_name}"), S("thread_name", "{draft_name}"), S("draft_name", "none")],
             op=("update_contact", {"name": "{draft_name}"})),
    ],
})

# ---------------------------------------------------------------------------
# shop: a welcome coupon is available at start; once used, claiming a new one
# makes it available again but the next purchase ignores it
# dims: [nav, shopping, rewards]
# no scripted bootstrap: the systematic walk seeds the graph
# ---------------------------------------------------------------------------
shop = {
    "name": "shop",
    "embedding_dim": 3,
    "main_page": "home",
    "vars": [
        {"name": "coupon_available", "kind": "boolean"},
        {"name": "coupon_reissued", "kind": "boolean"},
        {"name": "last_price", "kind": "enum", "values": ["none", "full", "discount"]},
    ],
    "initial": {"coupon_available": True, "coupon_reissued": False, "last_price": "none"},
    "pages": [
        page("home", "Home", "App Navigation", [1, 0, 0], ["navigation"], [
            w("shop", "Shop", ["navigation"]),
            w("rewards", "Rewards", ["navigation"]),
        ]),
        page("shop", "Shop", "Shopping", [0, 1, 0.1], ["shopping"], [
            w("buy", "Buy book", ["shopping"]),
            w("close", "×", ["navigation"], kind="icon"),
        ], touched=["coupon_available", "last_price"], parent="home"),
        page("rewards", "Rewards", "Reward Management", [0, 0.1, 1], ["rewards"], [
            w("claim", "Claim coupon", ["rewards"]),
            w("close", "×", ["navigation"], kind="icon"),
        ], touched=["coupon_available"], parent="home"),
    ],
    "rules": [
        rule("home_shop", "home", "shop", "shop"),
        rule("home_rewards", "home", "rewards", "rewards"),
        rule("shop_close", "shop", "close", "home"),
        rule("rewards_close", "rewards", "close", "home"),
        rule("buy_coupon", "shop", "buy", guard="coupon_available == true && coupon_reissued == false",
             updates=[S("coupon_available", False), S("last_price", "discount")],
             op=("consume_coupon", {})),
        rule("buy_reissued", "shop", "buy", guard="coupon_available == true && coupon_reissued == true",
             updates=[S("coupon_available", False), S("last_price", "full")],
             op=("consume_coupon", {})),
        rule("buy_full", "shop", "buy", guard="coupon_available == false",
             updates=[S("last_price", "full")], op=("purchase", {})),
        rule("claim_new", "rewards", "claim", guard="coupon_available == false",
             updates=[S("coupon_available", True), S("coupon_reissued", True)], op=("produce_coupon", {})),
        rule("claim_held", "rewards", "claim", guard="coupon_available == true",
             events=[{"toast": "Coupon already claimed"}]),
    ],
    "effects": [
        {"abstract_op": "consume_coupon", "postcondition": "coupon_available == false && last_price == \"discount\"",
         "description": "a purchase with an available coupon is discounted and uses the coupon up"},
        {"abstract_op": "produce_coupon", "postcondition": "coupon_available == true",
         "description": "claiming makes a coupon available"},
        {"abstract_op": "purchase", "postcondition": "last_price == \"full\"",
         "description": "a purchase without a coupon is charged in full"},
    ],
    "injected_bugs": [
        {"id": "reissued_coupon_ignored", "kind": "functional", "op": "consume_coupon",
         "description": "A coupon claimed after the welcome coupon was used shows as available but is not applied"},
    ],
}
dump("shop.app", shop)
dump("shop_reference.app", {
    "base": "shop.app", "name": "shop_reference", "injected_bugs": [],
    "replace_rules": [
        rule("buy_reissued", "shop", "buy", guard="coupon_available == true && coupon_reissued == true",
             updates=[S("coupon_available", False), S("last_price", "discount")],
             op=("consume_coupon", {})),
    ],
})

# ---------------------------------------------------------------------------
# clock: typing minutes after seconds wipes the seconds field, so the start
# button stays disabled when the fields are filled in the other order.
# "Preferences" covers two unrelated pages (theme, account) and starts as one
# coarse functionality.
# dims: [nav, timer, theme, account]
# ---------------------------------------------------------------------------
clock = {
    "name": "clock",
    "embedding_dim": 4,
    "main_page": "home",
    "vars": [
        {"name": "minutes", "kind": "enum", "values": ["none", "5"]},
        {"name": "seconds", "kind": "enum", "values": ["none", "30"]},
        {"name": "sound", "kind": "boolean"},
        {"name": "timer_state", "kind": "enum", "values": ["idle", "running"]},
        {"name": "dark_mode", "kind": "boolean"},
        {"name": "signed_in", "kind": "boolean"},
    ],
    "initial": {"minutes": "none", "seconds": "none", "sound": False, "timer_state": "idle",
                "dark_mode": False, "signed_in": False},
    "pages": [
        page("home", "Home", "App Navigation", [1, 0, 0, 0], ["navigation"], [
            w("timer", "Timer", ["navigation"]),
            w("theme", "Theme", ["navigation"]),
            w("account", "Account", ["navigation"]),
        ]),
        page("timer", "Timer", "Timer Setup", [0, 1, 0, 0], ["timer"], [
            w("minutes", "Minutes", ["timer"], kind="input", default_input="5", order_independent=True),
            w("seconds", "Seconds", ["timer"], kind="input", default_input="30", order_independent=True),
            w("sound", "Sound", ["timer"], kind="checkbox", optional=True),
            w("start", "Start", ["timer"], enabled_when="minutes != \"none\" && seconds != \"none\""),
            w("stop", "Stop", ["timer"], enabled_when="timer_state == \"running\""),
            w("close", "×", ["navigation"], kind="icon"),
        ], touched=["minutes", "seconds", "timer_state"], parent="home"),
        page("theme", "Theme", "Preferences", [0.2, 0, 1, 0], ["preferences"], [
            w("dark", "Dark mode", ["preferences"], kind="toggle"),
            w("close", "×", ["navigation"], kind="icon"),
        ], touched=["dark_mode"], parent="home"),
        page("account", "Account", "Preferences", [0.2, 0, 0, 1], ["preferences"], [
            w("sign_in", "Sign in", ["preferences"]),
            w("close", "×", ["navigation"], kind="icon"),
        ], touched=["signed_in"], parent="home"),
    ],
    "rules": [
        rule("home_timer", "home", "timer", "timer"),
        rule("home_theme", "home", "theme", "theme"),
        rule("home_account", "home", "account", "account"),
        rule("timer_close", "timer", "close", "home"),
        rule("theme_close", "theme", "close", "home"),
        rule("account_close", "account", "close", "home"),
        rule("timer_minutes", "timer", "minutes", action="input",
             updates=[S("minutes", "{input}"), S("seconds", "none")]),
        rule("timer_seconds", "timer", "seconds", action="input", updates=[S("seconds", "{input}")]),
        rule("timer_sound_on", "timer", "sound", action="toggle_on", updates=[S("sound", True)]),
        rule("timer_sound_off", "timer", "sound", action="toggle_off", updates=[S("sound", False)]),
        rule("timer_start", "timer", "start",
             updates=[S("timer_state", "running")],
             op=("start_timer", {"minutes": "{minutes}", "seconds": "{seconds}"})),
        rule("timer_stop", "timer", "stop",
             updates=[S("timer_state", "idle"), S("minutes", "none"), S("seconds", "none")]),
        rule("theme_dark_on", "theme", "dark", action="toggle_on", updates=[S("dark_mode", True)]),
        rule("theme_dark_off", "theme", "dark", action="toggle_off", updates=[S("dark_mode", False)]),
        rule("account_sign_in", "account", "sign_in", guard="signed_in == false", updates=[S("signed_in", True)]),
        rule("account_sign_out", "account", "sign_in", guard="signed_in == true", updates=[S("signed_in", False)]),
    ],
    "effects": [
        {"abstract_op": "start_timer", "postcondition": "timer_state == \"running\"",
         "description": "starting the timer runs it"},
    ],
    "bootstrap": [
        step("home", "theme"),
        step("theme", "dark", "toggle_on"),
        step("theme", "close"),
        step("home", "account"),
        step("account", "sign_in"),
        step("account", "close"),
        step("home", "timer"),
        step("timer", "minutes", "input", "5"),
        step("timer", "seconds", "input", "30"),
        step("timer", "start"),
        step("timer", "stop"),
        step("timer", "close"),
    ],
    "injected_bugs": [
        {"id": "minutes_clear_seconds", "kind": "functional", "page": "timer", "widget": "start",
         "description": "Entering minutes clears the seconds field, so start stays disabled in one input order"},
    ],
}
dump("clock.app", clock)
dump("clock_reference.app", {
    "base": "clock.app", "name": "clock_reference", "injected_bugs": [],
    "replace_rules": [
        rule("timer_minutes", "timer", "minutes", action="input", updates=[S("minutes", "{input}")]),
    ],
})
