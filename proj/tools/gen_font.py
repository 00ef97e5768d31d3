#!/usr/bin/env python3
"""Rasterizes DejaVu Sans Mono into the 1-bit glyph table compiled into the
image renderer. Run once; the output is checked in and never regenerated at
build time so renders stay byte-identical across machines."""
import sys
from PIL import Image, ImageDraw, ImageFont

FONT = "/usr/share/fonts/truetype/dejavu/DejaVuSansMono.ttf"
WIDTH, HEIGHT, SIZE = 7, 15, 12
CHARS = [chr(c) for c in range(32, 127)] + ["…"]


def glyph_rows(font, ch):
    img = Image.new("L", (WIDTH, HEIGHT), 0)
    ImageDraw.Draw(img).text((0, 0), ch, font=font, fill=255)
    rows = []
    for y in range(HEIGHT):
        bits = 0
        for x in range(WIDTH):
            if img.getpixel((x, y)) >= 128:
                bits |= 1 << (WIDTH - 1 - x)
        rows.append(bits)
    return rows


def main(out):
    font = ImageFont.truetype(FONT, SIZE)
    lines = [
        "// Generated by tools/gen_font.py from DejaVu Sans Mono (Bitstream Vera license).",
        "// Each glyph is %d rows; bit %d of a row is the leftmost pixel." % (HEIGHT, WIDTH - 1),
        "// Index 0..94 covers ASCII 0x20..0x7E, index 95 is U+2026.",
        "",
        "inline constexpr int kGlyphWidth = %d;" % WIDTH,
        "inline constexpr int kGlyphHeight = %d;" % HEIGHT,
        "inline constexpr int kGlyphCount = %d;" % len(CHARS),
        "inline constexpr int kEllipsisGlyph = %d;" % (len(CHARS) - 1),
        "",
        "inline constexpr unsigned char kGlyphs[kGlyphCount][kGlyphHeight] = {",
    ]
    for ch in CHARS:
        rows = glyph_rows(font, ch)
        label = "U+2026" if ch == "…" else repr(ch)
        lines.append("    {%s},  // %s" % (", ".join("0x%02x" % r for r in rows), label))
    lines.append("};")
    with open(out, "w") as fh:
        fh.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1])
