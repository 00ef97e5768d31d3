#include <cstdio>
#include <filesystem>

#include "support.hpp"
#include "tabdpo/util.hpp"

int main() {
  const auto dir = support::data_dir() / "golden";
  std::filesystem::create_directories(dir);
  for (const auto& f : support::golden_fixtures()) {
    const auto img = tabdpo::render_image(f.table, f.style);
    tabdpo::util::write_file(
        (dir / (f.name + ".png")).string(),
        std::string_view(reinterpret_cast<const char*>(img.encoded.data()), img.encoded.size()));
    std::printf("%s %dx%d %zu bytes\n", f.name.c_str(), img.pixels.width, img.pixels.height,
                img.encoded.size());
  }
  return 0;
}
