/** Request sequence numbers for discarding stale responses.
 *
 * Several renders can be in flight at once (camera drags outpace the
 * server). Each burst takes a ticket; only the response belonging to the
 * newest ticket may touch the UI, everything older is dropped on arrival.
 */

export class RequestSequencer {
  private next = 0;
  private newest = -1;

  /** Take a ticket for a request about to be issued. */
  begin(): number {
    this.newest = this.next;
    return this.next++;
  }

  /** True while no newer request has been issued since `ticket`. */
  isCurrent(ticket: number): boolean {
    return ticket === this.newest;
  }
}
