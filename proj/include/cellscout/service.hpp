#pragma once

#include <string>

#include <httplib.h>

#include "cellscout/store.hpp"

/**
 * @file service.hpp
 * @brief HTTP binding of a Workspace.
 *
 * Errors come back as {"error": code, "message": text}. Unknown datasets,
 * regions, jobs, associations and untrained datasets give 404; a second
 * concurrent training request gives 409; malformed requests give 400 and
 * other domain errors 422. Matrix parse errors on upload give 400 with the
 * parser's code.
 */

namespace cellscout {

/// HTTP status for a domain error code raised while serving `method`.
int status_for(const std::string& code, const std::string& method);

/// Installs every endpoint plus CORS handling on `server`. `workspace` must
/// outlive the server.
void register_routes(httplib::Server& server, Workspace& workspace);

}  // namespace cellscout
