// Regenerates a golden vision case: make_golden <scenario.yaml> <out-dir>
#include <fstream>
#include <iostream>

#include "una/frame.hpp"
#include "una/placement.hpp"
#include "una/testbed.hpp"

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: make_golden <scenario.yaml> <out-dir>\n";
    return 2;
  }
  const una::Testbed tb(una::load_scenario(argv[1]));
  const std::filesystem::path out = argv[2];
  std::filesystem::create_directories(out);
  const auto frame = una::render_overhead(tb.world());
  const auto cal = una::calibration_for(tb.world());
  una::write_ppm(out / "frame.ppm", frame);
  std::ofstream(out / "calibration.yaml") << una::dump_calibration(cal);
  std::ofstream(out / "expected.json") << una::to_json(una::locate_tags(frame, cal)).dump(2) << "\n";
  return 0;
}
