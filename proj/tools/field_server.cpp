// Stdio guidance server speaking the line-delimited field protocol.
//
// The default mode answers queries with the in-process analytic field, which
// lets a subprocess round trip be checked against direct calls; the other
// modes exist to exercise client failure handling:
//   zeros            reply with a zero twist to every query
//   silent           acknowledge the hello, then never answer a query
//   malformed        reply with a twist whose angular array has 5 entries
//   wrong-convention announce a translational-first twist order in the hello
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ppd/grasps.hpp"
#include "ppd/guidance.hpp"
#include "ppd/protocol.hpp"

int main(int argc, char** argv) {
  CLI::App app{"analytic guidance field server (line-delimited JSON on stdio)"};
  std::string mode = "oracle";
  std::string grasps_path;
  app.add_option("--mode", mode, "oracle|zeros|silent|malformed|wrong-convention")
      ->check(CLI::IsMember({"oracle", "zeros", "silent", "malformed", "wrong-convention"}));
  app.add_option("--grasps", grasps_path, "grasp list answered by oracle mode");
  CLI11_PARSE(app, argc, argv);

  std::vector<ppd::GraspCandidate> grasps;
  if (mode == "oracle") {
    if (grasps_path.empty()) {
      std::cerr << "oracle mode needs --grasps\n";
      return 2;
    }
    try {
      grasps = ppd::load_grasps(grasps_path);
    } catch (const std::exception& e) {
      std::cerr << "cannot load grasps: " << e.what() << "\n";
      return 2;
    }
  }

  ppd::FieldHello session;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    try {
      const std::string type = ppd::peek_message_type(line);
      if (type == "hello") {
        session = ppd::parse_hello(line);
        ppd::FieldHello reply;
        reply.noise_seed = session.noise_seed;
        reply.schedule = session.schedule;
        if (mode == "wrong-convention") reply.twist_order = "translational_first";
        std::cout << ppd::encode_hello(reply) << "\n" << std::flush;
      } else if (type == "query") {
        if (mode == "silent") continue;
        if (mode == "malformed") {
          std::cout << R"({"type":"twist","angular":[0,0,0,0,0],"translational":[0,0,0]})"
                    << "\n"
                    << std::flush;
          continue;
        }
        const ppd::GuidanceQuery query = ppd::parse_query(line);
        const ppd::Twist twist =
            mode == "zeros"
                ? ppd::Twist::zero()
                : ppd::oracle_field(query, grasps, session.schedule, session.noise_seed);
        std::cout << ppd::encode_twist(twist) << "\n" << std::flush;
      } else {
        std::cout << ppd::encode_error("internal", "unexpected message type '" + type + "'")
                  << "\n"
                  << std::flush;
      }
    } catch (const ppd::BinExhausted& e) {
      std::cout << ppd::encode_error("bin_exhausted", e.what()) << "\n" << std::flush;
    } catch (const std::exception& e) {
      std::cout << ppd::encode_error("internal", e.what()) << "\n" << std::flush;
    }
  }
  return 0;
}
